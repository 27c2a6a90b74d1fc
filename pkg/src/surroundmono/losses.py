"""The surround-view self-supervised objective.

Per-pixel photometric error mixes SSIM and L1, is masked by the warp's
non-overlap mask and a fixed self-occlusion mask, and is averaged into one
scalar per (target camera, context) pair. Pairs come in three kinds:
temporal (same camera, t-1/t+1), spatial (overlapping camera, t) and
spatio-temporal (overlapping camera, t-1/t+1). The total adds an
edge-aware depth smoothness term and the pose-consistency penalty.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from functools import partial
from typing import TYPE_CHECKING

import jax
import jax.numpy as jnp
import numpy as np

from surroundmono.geometry import (
    CameraModel,
    RigidTransform,
    compose_arrays,
    euler_from_rotation_array,
    invert_arrays,
    relative,
    rotation_from_euler_array,
    to_canonical,
    EulerAngles,
)
from surroundmono.warping import (
    BinaryMask,
    DepthField,
    ImagePlane,
    bilinear_sample,
    nearest_ones,
    warp_coords,
)

if TYPE_CHECKING:
    from surroundmono.synthetic import MultiCamSample

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

TEMPORAL, SPATIAL, SPATIOTEMPORAL = 0, 1, 2
# pose slots: index 0 is t -> t-1, index 1 is t -> t+1
CONTEXT_TIMES = (0, 2)


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.85
    alpha_t: float = 0.1
    alpha_r: float = 0.1
    lambda_s: float = 0.1
    lambda_t: float = 1.0
    lambda_d: float = 0.001

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {value}")
        if self.alpha > 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def as_tuple(self) -> tuple:
        return (self.alpha, self.alpha_t, self.alpha_r, self.lambda_s, self.lambda_t, self.lambda_d)


@dataclass
class LossBreakdown:
    photometric_temporal: float
    photometric_spatial: float
    smoothness: float
    pcc_translation: float
    pcc_rotation: float
    total: float
    valid_pixel_counts: dict = field(default_factory=dict)
    weights: LossWeights = field(default_factory=LossWeights)

    def weighted_sum(self) -> float:
        w = self.weights
        return (
            w.lambda_t * self.photometric_temporal
            + w.lambda_s * self.photometric_spatial
            + w.lambda_d * self.smoothness
            + w.alpha_t * self.pcc_translation
            + w.alpha_r * self.pcc_rotation
        )

    def to_dict(self) -> dict:
        return {
            "photometric_temporal": self.photometric_temporal,
            "photometric_spatial": self.photometric_spatial,
            "smoothness": self.smoothness,
            "pcc_translation": self.pcc_translation,
            "pcc_rotation": self.pcc_rotation,
            "total": self.total,
            "valid_pixel_counts": dict(self.valid_pixel_counts),
        }

    SCALAR_FIELDS = (
        "photometric_temporal",
        "photometric_spatial",
        "smoothness",
        "pcc_translation",
        "pcc_rotation",
        "total",
    )


# ---------------------------------------------------------------------------
# array kernels


def box3_sum(x):
    """3x3 window sum over the two axes after the leading one, zero padded."""
    pad = [(0, 0)] * x.ndim
    pad[1] = (1, 1)
    pad[2] = (1, 1)
    xp = jnp.pad(x, pad)
    H, W = x.shape[1], x.shape[2]
    out = 0.0
    for dy in range(3):
        for dx in range(3):
            out = out + xp[:, dy : dy + H, dx : dx + W]
    return out


def ssim_array(a, b, mask):
    """Per-pixel, per-channel SSIM of ``(B, H, W, C)`` images.

    Window statistics use only the masked-in pixels of each 3x3 window.
    Pixels whose window holds no valid pixel get SSIM 0.
    """
    m = mask.astype(a.dtype)[..., None]
    n = box3_sum(m)
    has = n > 0
    inv = jnp.where(has, 1.0 / jnp.where(has, n, 1.0), 0.0)
    mu_a = box3_sum(m * a) * inv
    mu_b = box3_sum(m * b) * inv
    var_a = box3_sum(m * a * a) * inv - mu_a**2
    var_b = box3_sum(m * b * b) * inv - mu_b**2
    cov = box3_sum(m * a * b) * inv - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return jnp.where(has, num / den, 0.0)


def _abs0(x):
    """``|x|`` whose derivative at 0 is 0 (jnp.abs uses +1), so exact matches give zero gradient."""
    return x * jax.lax.stop_gradient(jnp.sign(x))


def photometric_array(target, synth, mask, alpha):
    """``alpha (1 - SSIM)/2 + (1 - alpha) |I - I'|`` averaged over channels; 0 off-mask."""
    s = ssim_array(target, synth, mask)
    per = alpha * (1.0 - s) / 2.0 + (1.0 - alpha) * _abs0(target - synth)
    return jnp.where(mask, per.mean(axis=-1), 0.0)


def masked_mean_array(loss_map, mask):
    """Mean over masked-in pixels per leading index; 0 when nothing survives."""
    m = mask.astype(loss_map.dtype)
    n = m.sum(axis=(1, 2))
    return (loss_map * m).sum(axis=(1, 2)) / jnp.maximum(n, 1.0), n


def smoothness_array(log_depth, images):
    """Edge-aware first-order smoothness of mean-normalized depth, per camera."""
    d = jnp.exp(log_depth)
    dn = d / d.mean(axis=(1, 2), keepdims=True)
    gx_d = _abs0(dn[:, :, 1:] - dn[:, :, :-1])
    gy_d = _abs0(dn[:, 1:, :] - dn[:, :-1, :])
    gx_i = jnp.abs(images[:, :, 1:, :] - images[:, :, :-1, :]).mean(axis=-1)
    gy_i = jnp.abs(images[:, 1:, :, :] - images[:, :-1, :, :]).mean(axis=-1)
    return (gx_d * jnp.exp(-gx_i)).mean(axis=(1, 2)) + (gy_d * jnp.exp(-gy_i)).mean(axis=(1, 2))


def pose_consistency_array(pose, rel_R, rel_t):
    """Translation and rotation consistency against camera 0.

    Args:
        pose: ``(N, S, 6)`` per-camera motions ``(tx, ty, tz, phi, theta, psi)``.
        rel_R, rel_t: ``(N, 3, 3)``, ``(N, 3)`` transforms from camera ``j``
            to the canonical camera (``X_0^-1 X_j``).

    Returns:
        ``(t_loss, R_loss)`` summed over cameras 1..N-1 and pose slots.
    """
    R_hat = rotation_from_euler_array(pose[..., 3:])
    t_hat = pose[..., :3]
    Rr = rel_R[:, None]
    tr = rel_t[:, None]
    Ri, ti = invert_arrays(Rr, tr)
    R1, t1 = compose_arrays(Rr, tr, R_hat, t_hat)
    Rc, tc = compose_arrays(R1, t1, Ri, ti)
    eul = euler_from_rotation_array(Rc)
    t_loss = ((tc[:1] - tc[1:]) ** 2).sum()
    r_loss = ((eul[:1] - eul[1:]) ** 2).sum()
    return t_loss, r_loss


# ---------------------------------------------------------------------------
# value-level API


def _as_batch(img: ImagePlane):
    return jnp.asarray(img.data)[None]


def ssim(a: ImagePlane, b: ImagePlane, mask: BinaryMask | None = None) -> np.ndarray:
    """Per-pixel SSIM map ``(H, W)``, averaged over channels."""
    if a.data.shape != b.data.shape:
        raise ValueError("images differ in shape")
    if mask is None:
        mask = BinaryMask.ones(a.height, a.width)
    s = ssim_array(_as_batch(a), _as_batch(b), jnp.asarray(mask.bits)[None])
    return np.asarray(s[0].mean(axis=-1))


def photometric_loss(target: ImagePlane, synth: ImagePlane, mask: BinaryMask | None = None, alpha: float = 0.85):
    if target.data.shape != synth.data.shape:
        raise ValueError("images differ in shape")
    if mask is None:
        mask = BinaryMask.ones(target.height, target.width)
    out = photometric_array(_as_batch(target), _as_batch(synth), jnp.asarray(mask.bits)[None], alpha)
    return np.asarray(out[0])


def masked_photometric_loss(loss_map, no_mask: BinaryMask, so_mask: BinaryMask) -> tuple[float, int]:
    """Mean of ``loss_map`` over pixels kept by both masks, with the pixel count."""
    loss_map = np.asarray(loss_map, dtype=np.float64)
    if loss_map.shape != no_mask.bits.shape or loss_map.shape != so_mask.bits.shape:
        raise ValueError("loss map and masks differ in shape")
    m = jnp.asarray(no_mask.bits & so_mask.bits)[None]
    mean, n = masked_mean_array(jnp.asarray(loss_map)[None], m)
    return float(mean[0]), int(n[0])


def smoothness_loss(depth: DepthField, image: ImagePlane) -> float:
    if depth.shape != (image.height, image.width):
        raise ValueError("depth and image differ in shape")
    return float(smoothness_array(jnp.asarray(depth.log_depth)[None], _as_batch(image))[0])


def pose_consistency_loss(poses, rig, weights: LossWeights | None = None):
    """Consistency of per-camera motions once expressed in the first camera's frame.

    Args:
        poses: one :class:`RigidTransform` per camera (same time interval).
        rig: matching list of :class:`CameraModel`; index 0 is canonical.

    Returns:
        ``(t_loss, R_loss, pcc, gimbal_flag)`` where ``pcc`` uses
        ``weights.alpha_t`` / ``weights.alpha_r``.
    """
    if len(poses) != len(rig) or len(rig) < 2:
        raise ValueError("need one pose per camera and at least two cameras")
    weights = weights or LossWeights()
    X0 = rig[0].extrinsics
    canon = [to_canonical(p, c.extrinsics, X0) for p, c in zip(poses, rig)]
    angles = [EulerAngles.from_rotation(x.rotation) for x in canon]
    t0, e0 = canon[0].translation, angles[0].as_array()
    t_loss = float(sum(np.sum((t0 - x.translation) ** 2) for x in canon[1:]))
    r_loss = float(sum(np.sum((e0 - a.as_array()) ** 2) for a in angles[1:]))
    locked = any(a.near_gimbal_lock for a in angles)
    return t_loss, r_loss, weights.alpha_t * t_loss + weights.alpha_r * r_loss, locked


# ---------------------------------------------------------------------------
# batched multi-camera objective


@dataclass(frozen=True)
class Toggles:
    use_spatial: bool = True
    use_spatiotemporal: bool = True
    use_pcc: bool = True
    use_self_occ_masks: bool = True


@dataclass(frozen=True)
class ContextPair:
    target: int
    source: int
    slot: int  # pose slot, -1 for same-timestep pairs
    kind: int

    @property
    def source_time(self) -> int:
        return 1 if self.slot < 0 else CONTEXT_TIMES[self.slot]


def overlapping_pairs(rig: list[CameraModel], min_fraction: float = 0.01, probe_depths=(5.0, 20.0, 100.0)):
    """Ordered camera pairs ``(i, j)`` whose views overlap at some probe depth."""
    from surroundmono.warping import warp_spatial

    pairs = []
    for i, ci in enumerate(rig):
        for j, cj in enumerate(rig):
            if i == j:
                continue
            best = 0.0
            for d in probe_depths:
                w = warp_spatial(DepthField(np.full(ci.shape, np.log(d))), ci, cj)
                best = max(best, float(w.valid.mean()))
            if best >= min_fraction:
                pairs.append((i, j))
    return pairs


def build_pairs(rig: list[CameraModel], toggles: Toggles, neighbours=None) -> list[ContextPair]:
    """Temporal pairs first, then spatial, then spatio-temporal."""
    n = len(rig)
    if neighbours is None:
        neighbours = overlapping_pairs(rig) if n > 1 else []
    out = [ContextPair(i, i, s, TEMPORAL) for i in range(n) for s in (0, 1)]
    if toggles.use_spatial:
        out += [ContextPair(i, j, -1, SPATIAL) for i, j in neighbours]
    if toggles.use_spatiotemporal:
        out += [ContextPair(i, j, s, SPATIOTEMPORAL) for i, j in neighbours for s in (0, 1)]
    return out


def effective_weights(weights: LossWeights, toggles: Toggles) -> LossWeights:
    if not toggles.use_pcc:
        weights = replace(weights, alpha_t=0.0, alpha_r=0.0)
    return weights


class Objective:
    """The full loss for one sample, with static pair structure and jitted kernels.

    Parameters are ``log_depth`` ``(N, H, W)`` and ``pose`` ``(N, 2, 6)``,
    where pose slot 0 maps frame t to t-1 and slot 1 maps t to t+1, both in
    the camera's own frame. Masks are computed by :meth:`masks` and then held
    fixed inside :meth:`value` / :meth:`value_and_grad`.
    """

    def __init__(self, sample: "MultiCamSample", weights: LossWeights | None = None, toggles: Toggles | None = None):
        self.sample = sample
        self.toggles = toggles or Toggles()
        self.weights = effective_weights(weights or LossWeights(), self.toggles)
        rig = sample.rig
        shapes = {c.shape for c in rig}
        if len(shapes) != 1:
            raise ValueError("all cameras of a rig must share one image size")
        self.shape = shapes.pop()
        self.pairs = build_pairs(rig, self.toggles, neighbours=sample.neighbours())
        self.n_temporal = sum(p.kind == TEMPORAL for p in self.pairs)
        self.n_cross = len(self.pairs) - self.n_temporal

        images = np.asarray(sample.images, dtype=np.float64)  # (N, 3, H, W, C)
        tgt = np.array([p.target for p in self.pairs])
        src = np.array([p.source for p in self.pairs])
        slot = np.array([max(p.slot, 0) for p in self.pairs])
        use_ego = np.array([p.slot >= 0 for p in self.pairs])
        rel = [relative(rig[p.target].extrinsics, rig[p.source].extrinsics) for p in self.pairs]
        intr = np.array([c.intrinsics for c in rig])
        canon = [relative(c.extrinsics, rig[0].extrinsics) for c in rig]
        if self.toggles.use_self_occ_masks:
            so = np.asarray(sample.self_occ, dtype=bool)
        else:
            so = np.ones((len(rig),) + self.shape, dtype=bool)
        self.data = {
            "tgt": jnp.asarray(tgt),
            "slot": jnp.asarray(slot),
            "use_ego": jnp.asarray(use_ego),
            "rel_R": jnp.asarray(np.array([r.rotation for r in rel])),
            "rel_t": jnp.asarray(np.array([r.translation for r in rel])),
            "src_intr": jnp.asarray(intr[tgt]),
            "dst_intr": jnp.asarray(intr[src]),
            "tgt_images": jnp.asarray(images[tgt, 1]),
            "src_images": jnp.asarray(images[src, [p.source_time for p in self.pairs]]),
            "self_occ": jnp.asarray(so[tgt]),
            "src_self_occ": jnp.asarray(so[src]),
            "frames_t": jnp.asarray(images[:, 1]),
            "canon_R": jnp.asarray(np.array([c.rotation for c in canon])),
            "canon_t": jnp.asarray(np.array([c.translation for c in canon])),
        }
        self._static = (self.shape, self.n_temporal, self.n_cross, self.weights.as_tuple())
        self._np_tgt = np.ascontiguousarray(images[tgt, 1])
        self._np_src = np.ascontiguousarray(images[src, [p.source_time for p in self.pairs]])

    # -- evaluation ---------------------------------------------------------

    def masks(self, log_depth, pose) -> np.ndarray:
        """``(P, H, W)`` bool: non-overlap mask AND self-occlusion mask per pair."""
        return np.asarray(_pair_masks(jnp.asarray(log_depth), jnp.asarray(pose), self.data, self.shape))

    def value(self, log_depth, pose, masks=None) -> float:
        if masks is None:
            masks = self.masks(log_depth, pose)
        total, _ = _objective(jnp.asarray(log_depth), jnp.asarray(pose), jnp.asarray(masks), self.data, self._static)
        return float(total)

    def value_and_grad(self, log_depth, pose, masks=None):
        """``(loss, d_log_depth, d_pose, parts)`` with masks held constant."""
        if masks is None:
            masks = self.masks(log_depth, pose)
        (total, parts), (g_d, g_p) = _objective_vg(
            jnp.asarray(log_depth), jnp.asarray(pose), jnp.asarray(masks), self.data, self._static
        )
        return float(total), np.asarray(g_d), np.asarray(g_p), parts

    def pair_weights(self) -> np.ndarray:
        """Weight of each pair mean in the total loss."""
        w = np.zeros(len(self.pairs))
        if self.n_temporal:
            w[: self.n_temporal] = self.weights.lambda_t / self.n_temporal
        if self.n_cross:
            w[self.n_temporal :] = self.weights.lambda_s / self.n_cross
        return w

    def fused_value_and_grad(self, log_depth, pose):
        """Same contract as :meth:`value_and_grad`, with masks from the same point.

        The photometric part runs in the fused kernel of
        :mod:`surroundmono._kernels`; only the coordinate geometry and the
        regularizers go through jax. Returns ``(loss, g_d, g_p, parts, masks)``.
        """
        from surroundmono._kernels import photometric_fwd_bwd

        ld, ps = jnp.asarray(log_depth), jnp.asarray(pose)
        u, v, masks = (np.asarray(a) for a in _coords_and_masks(ld, ps, self.data, self.shape))
        pw = self.pair_weights()
        means, counts, du, dv = photometric_fwd_bwd(
            self._np_tgt, self._np_src, u, v, masks, self.weights.alpha, pw, True
        )
        g_d, g_p = _coords_vjp(ld, ps, self.data, self.shape, jnp.asarray(du), jnp.asarray(dv))
        (reg, (smooth, t_loss, r_loss)), (r_d, r_p) = _regularizers_vg(ld, ps, self.data, self._static[3])
        n_t = self.n_temporal
        photo_t = float(means[:n_t].mean()) if n_t else 0.0
        photo_s = float(means[n_t:].mean()) if self.n_cross else 0.0
        total = float(pw @ means) + float(reg)
        parts = {
            "photometric_temporal": photo_t,
            "photometric_spatial": photo_s,
            "smoothness": float(smooth),
            "pcc_translation": float(t_loss),
            "pcc_rotation": float(r_loss),
            "pair_means": means,
            "counts": counts,
        }
        return total, np.asarray(g_d) + np.asarray(r_d), np.asarray(g_p) + np.asarray(r_p), parts, masks

    def breakdown(self, log_depth, pose, masks=None) -> LossBreakdown:
        if masks is None:
            masks = self.masks(log_depth, pose)
        total, parts = _objective(jnp.asarray(log_depth), jnp.asarray(pose), jnp.asarray(masks), self.data, self._static)
        return self.to_breakdown(total, parts)

    def to_breakdown(self, total, parts) -> LossBreakdown:
        counts = np.asarray(parts["counts"]).astype(int)
        per_camera = {}
        for p, c in zip(self.pairs, counts):
            name = self.sample.rig[p.target].name or f"cam{p.target}"
            per_camera[name] = per_camera.get(name, 0) + int(c)
        out = LossBreakdown(
            photometric_temporal=float(parts["photometric_temporal"]),
            photometric_spatial=float(parts["photometric_spatial"]),
            smoothness=float(parts["smoothness"]),
            pcc_translation=float(parts["pcc_translation"]),
            pcc_rotation=float(parts["pcc_rotation"]),
            total=float(total),
            valid_pixel_counts=per_camera,
            weights=self.weights,
        )
        # the compiled total may differ from this fixed summation order by an ulp;
        # the reported total is the sum of the reported parts, nothing else
        out.total = out.weighted_sum()
        return out

    def pair_loss_maps(self, log_depth, pose, masks=None):
        """Synthesized views and per-pixel losses for every pair (debug output)."""
        if masks is None:
            masks = self.masks(log_depth, pose)
        synth, loss = _pair_maps(jnp.asarray(log_depth), jnp.asarray(pose), jnp.asarray(masks), self.data, self._static)
        return np.asarray(synth), np.asarray(loss), masks


def _pair_geometry(log_depth, pose, data, shape):
    R_ego = rotation_from_euler_array(pose[..., 3:])[data["tgt"], data["slot"]]
    t_ego = pose[..., :3][data["tgt"], data["slot"]]
    eye = jnp.eye(3, dtype=pose.dtype)
    use = data["use_ego"]
    R_ego = jnp.where(use[:, None, None], R_ego, eye)
    t_ego = jnp.where(use[:, None], t_ego, 0.0)
    R, t = compose_arrays(data["rel_R"], data["rel_t"], R_ego, t_ego)
    depth = jnp.exp(log_depth)[data["tgt"]]
    return warp_coords(depth, R, t, data["src_intr"], data["dst_intr"], shape)


@partial(jax.jit, static_argnums=(3,))
def _pair_masks(log_depth, pose, data, shape):
    u, v, valid = _pair_geometry(log_depth, pose, data, shape)
    return nearest_ones(u, v, valid, shape, data["src_self_occ"]) & data["self_occ"]


def _pair_terms(log_depth, pose, masks, data, static):
    shape, _, _, w = static
    alpha = w[0]
    u, v, _ = _pair_geometry(log_depth, pose, data, shape)
    synth = bilinear_sample(data["src_images"], u, v, masks)
    loss = photometric_array(data["tgt_images"], synth, masks, alpha)
    return synth, loss


@partial(jax.jit, static_argnums=(4,))
def _pair_maps(log_depth, pose, masks, data, static):
    return _pair_terms(log_depth, pose, masks, data, static)


def _objective_impl(log_depth, pose, masks, data, static):
    _, n_t, n_x, w = static
    _, alpha_t, alpha_r, lambda_s, lambda_t, lambda_d = w
    _, loss = _pair_terms(log_depth, pose, masks, data, static)
    means, counts = masked_mean_array(loss, masks)
    photo_t = means[:n_t].mean()
    photo_s = means[n_t:].mean() if n_x else jnp.zeros((), means.dtype)
    smooth = smoothness_array(log_depth, data["frames_t"]).mean()
    if pose.shape[0] > 1:
        t_loss, r_loss = pose_consistency_array(pose, data["canon_R"], data["canon_t"])
    else:
        t_loss = r_loss = jnp.zeros((), pose.dtype)
    total = lambda_t * photo_t + lambda_s * photo_s + lambda_d * smooth + alpha_t * t_loss + alpha_r * r_loss
    parts = {
        "photometric_temporal": photo_t,
        "photometric_spatial": photo_s,
        "smoothness": smooth,
        "pcc_translation": t_loss,
        "pcc_rotation": r_loss,
        "pair_means": means,
        "counts": counts,
    }
    return total, parts


@partial(jax.jit, static_argnums=(3,))
def _coords_and_masks(log_depth, pose, data, shape):
    u, v, valid = _pair_geometry(log_depth, pose, data, shape)
    masks = nearest_ones(u, v, valid, shape, data["src_self_occ"]) & data["self_occ"]
    return u, v, masks


@partial(jax.jit, static_argnums=(3,))
def _coords_vjp(log_depth, pose, data, shape, du, dv):
    def coords(ld, ps):
        u, v, _ = _pair_geometry(ld, ps, data, shape)
        return u, v

    _, pull = jax.vjp(coords, log_depth, pose)
    return pull((du, dv))


def _regularizers(log_depth, pose, data, w):
    _, alpha_t, alpha_r, _, _, lambda_d = w
    smooth = smoothness_array(log_depth, data["frames_t"]).mean()
    if pose.shape[0] > 1:
        t_loss, r_loss = pose_consistency_array(pose, data["canon_R"], data["canon_t"])
    else:
        t_loss = r_loss = jnp.zeros((), pose.dtype)
    return lambda_d * smooth + alpha_t * t_loss + alpha_r * r_loss, (smooth, t_loss, r_loss)


_regularizers_vg = jax.jit(jax.value_and_grad(_regularizers, argnums=(0, 1), has_aux=True), static_argnums=(3,))

_objective = jax.jit(_objective_impl, static_argnums=(4,))
_objective_vg = jax.jit(jax.value_and_grad(_objective_impl, argnums=(0, 1), has_aux=True), static_argnums=(4,))


def total_loss(sample: "MultiCamSample", log_depth, pose, weights: LossWeights | None = None, toggles: Toggles | None = None) -> LossBreakdown:
    """Evaluate every enabled term at ``(log_depth, pose)``; masks from the same point."""
    return Objective(sample, weights, toggles).breakdown(log_depth, pose)
