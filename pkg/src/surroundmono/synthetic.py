"""Synthetic surround-view rigs and scenes.

A ring of outward-facing pinhole cameras moves through a static world made
of a textured ground plane and axis-aligned boxes. Images are ray cast with
Lambertian shading, so brightness constancy and the static-world assumption
hold everywhere except inside the optional ego-body occluder, which is
attached to the cameras and flickers between frames.

World and rig frames share the camera convention: x right, y down, z
forward. The rig frame coincides with the first camera's frame, and the
world frame is the rig frame at the middle timestep.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np

from surroundmono.geometry import CameraModel, RigidTransform, compose, inverse
from surroundmono.warping import BinaryMask

FAR_PLANE = 1000.0
SIX_CAMERA_NAMES = ("front", "front_left", "front_right", "back_left", "back_right", "back")
SIX_CAMERA_YAWS = (0.0, 60.0, -60.0, 120.0, -120.0, 180.0)


@dataclass(frozen=True)
class RigSpec:
    """Cameras on a circle facing outward.

    ``yaw_deg`` gives each camera's heading (positive turns left); when
    omitted, ``n_cameras`` headings are spread evenly, using the
    front/front-left/front-right/... ordering for six cameras.
    """

    n_cameras: int = 6
    width: int = 96
    height: int = 64
    hfov_deg: float = 72.0
    cy_fraction: float = 0.3
    radial_offset: float = 1.0
    yaw_deg: tuple | None = None
    names: tuple | None = None
    self_occ_fraction: float = 0.15

    def headings(self) -> list[float]:
        if self.yaw_deg is not None:
            return [float(y) for y in self.yaw_deg]
        if self.n_cameras == 6:
            return list(SIX_CAMERA_YAWS)
        return [360.0 * k / self.n_cameras for k in range(self.n_cameras)]

    def camera_names(self) -> list[str]:
        if self.names is not None:
            return list(self.names)
        if self.n_cameras == 6 and self.yaw_deg is None:
            return list(SIX_CAMERA_NAMES)
        return [f"cam{k}" for k in range(self.n_cameras)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["yaw_deg"] = list(self.yaw_deg) if self.yaw_deg is not None else None
        d["names"] = list(self.names) if self.names is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RigSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown rig field(s): {', '.join(sorted(unknown))}")
        for key in ("yaw_deg", "names"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def yaw_rotation(yaw: float) -> np.ndarray:
    """Rotation about the up axis (-y) by ``yaw`` radians, positive to the left."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def build_rig(spec: RigSpec) -> list[CameraModel]:
    headings = spec.headings()
    if len(headings) != spec.n_cameras or spec.n_cameras < 1:
        raise ValueError("need one heading per camera and at least one camera")
    wrapped = [round(h % 360.0, 9) for h in headings]
    if len(set(wrapped)) != len(wrapped):
        raise ValueError("camera headings must be distinct")
    names = spec.camera_names()
    if len(names) != spec.n_cameras:
        raise ValueError("need one name per camera")
    fx = (spec.width / 2.0) / math.tan(math.radians(spec.hfov_deg) / 2.0)
    cx = (spec.width - 1) / 2.0
    cy = spec.cy_fraction * (spec.height - 1)
    centre = np.array([0.0, 0.0, -spec.radial_offset])
    cams = []
    for yaw, name in zip(headings, names):
        R = yaw_rotation(math.radians(yaw))
        t = centre + spec.radial_offset * R[:, 2]
        cams.append(CameraModel(fx, fx, cx, cy, spec.width, spec.height, RigidTransform(R, t), name))
    return cams


def analytic_overlap_angle(hfov_deg: float, separation_deg: float) -> float:
    """Shared horizontal field of view (degrees) of two co-located cameras."""
    return max(0.0, hfov_deg - abs(separation_deg))


def analytic_overlap_fraction(hfov_deg: float, separation_deg: float) -> float:
    """Fraction of image width shared by two co-located cameras at infinity.

    Horizontal only and exact for image columns: a column at horizontal angle
    ``a`` from the axis has ``u - cx = fx tan(a)``.
    """
    half = math.radians(hfov_deg) / 2.0
    sep = math.radians(abs(separation_deg))
    if sep >= 2 * half:
        return 0.0
    # columns of camera i whose ray angle a satisfies a - sep >= -half
    return (math.tan(half) - math.tan(sep - half)) / (2 * math.tan(half))


# ---------------------------------------------------------------------------
# scene


@dataclass(frozen=True)
class Box:
    centre: tuple
    size: tuple
    tint: tuple = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    ground_height: float = 1.5
    texture_scale: float = 1.5
    octaves: int = 3
    boxes: tuple = ()
    light_dir: tuple = (0.3, -1.0, 0.45)
    speed: float = 0.5
    yaw_rate_deg: float = 2.0
    ground: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["boxes"] = [asdict(b) for b in self.boxes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scene field(s): {', '.join(sorted(unknown))}")
        if "boxes" in d:
            d["boxes"] = tuple(
                Box(tuple(b["centre"]), tuple(b["size"]), tuple(b.get("tint", (1.0, 1.0, 1.0)))) for b in d["boxes"]
            )
        for key in ("light_dir",):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def trajectory(self) -> list[RigidTransform]:
        """Rig-to-world poses at t-1, t, t+1."""
        out = []
        for k in (-1, 0, 1):
            R = yaw_rotation(math.radians(self.yaw_rate_deg * k))
            out.append(RigidTransform(R, np.array([0.0, 0.0, self.speed * k])))
        return out


def _azimuth_span(x: float, z: float, w: float, d: float, origin=(0.0, -1.0)) -> tuple[float, float]:
    """Horizontal angular extent (degrees, positive left) of a box footprint seen from ``origin``."""
    angs = [
        math.degrees(math.atan2(-(x + sx * w / 2 - origin[0]), z + sz * d / 2 - origin[1]))
        for sx in (-1, 1)
        for sz in (-1, 1)
    ]
    mid = angs[0]
    rel = [((a - mid + 180.0) % 360.0) - 180.0 for a in angs]
    return mid + min(rel), mid + max(rel)


def _covers(span: tuple[float, float], angle: float, margin: float) -> bool:
    lo, hi = span
    centre = 0.5 * (lo + hi)
    off = ((angle - centre + 180.0) % 360.0) - 180.0
    return abs(off) <= 0.5 * (hi - lo) + margin


def default_scene(
    seed: int = 0,
    n_boxes: int = 12,
    seams_deg: tuple = (30.0, 90.0, 150.0, 210.0, 270.0, 330.0),
    seam_margin_deg: float = 12.0,
) -> SceneSpec:
    """Ground plane, a ring of boxes and an enclosing set of walls.

    Box silhouettes are kept ``seam_margin_deg`` away from the ``seams_deg``
    headings, where adjacent cameras of the standard rig overlap. A box
    edge inside a narrow overlap band is seen against different
    backgrounds by the two cameras (a 1 m baseline at 8 m is several
    pixels of parallax), which the photometric model cannot explain.
    """
    rng = np.random.default_rng(seed)
    boxes = []
    for k in range(n_boxes):
        for _ in range(1000):
            ang = 360.0 * (k + rng.uniform(-0.5, 0.5)) / n_boxes
            r = rng.uniform(6.0, 13.0)
            w = rng.uniform(1.5, 3.5)
            d = rng.uniform(1.5, 3.5)
            h = rng.uniform(2.5, 6.0)
            x, z = -r * math.sin(math.radians(ang)), r * math.cos(math.radians(ang))
            span = _azimuth_span(x, z, w, d)
            if not any(_covers(span, s, seam_margin_deg) for s in seams_deg):
                break
        else:
            continue
        tint = tuple(float(c) for c in rng.uniform(0.55, 1.0, size=3))
        boxes.append(Box((x, 1.5 - h / 2, z), (w, h, d), tint))
    walls = [
        Box((0.0, -6.0, 25.0), (60.0, 15.0, 1.0), (0.9, 0.85, 0.8)),
        Box((0.0, -6.0, -25.0), (60.0, 15.0, 1.0), (0.8, 0.9, 0.85)),
        Box((25.0, -6.0, 0.0), (1.0, 15.0, 60.0), (0.85, 0.8, 0.9)),
        Box((-25.0, -6.0, 0.0), (1.0, 15.0, 60.0), (0.8, 0.85, 0.9)),
    ]
    return SceneSpec(seed=seed, boxes=tuple(boxes + walls))


def _value_noise(points: np.ndarray, seed: int, octaves: int, scale: float) -> np.ndarray:
    """Multi-octave trilinear value noise in [0, 1] at ``(M, 3)`` world points."""
    table = np.random.default_rng(seed).random(4096)
    total = np.zeros(len(points))
    amp, norm = 1.0, 0.0
    freq = 1.0 / scale
    for o in range(octaves):
        p = points * freq + 17.31 * o
        i0 = np.floor(p).astype(np.int64)
        f = p - i0
        f = f * f * (3 - 2 * f)
        acc = np.zeros(len(points))
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    ix, iy, iz = i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz
                    h = (ix * 73856093) ^ (iy * 19349663) ^ (iz * 83492791)
                    val = table[np.mod(h, 4096)]
                    wx = f[:, 0] if dx else 1 - f[:, 0]
                    wy = f[:, 1] if dy else 1 - f[:, 1]
                    wz = f[:, 2] if dz else 1 - f[:, 2]
                    acc += wx * wy * wz * val
        total += amp * acc
        norm += amp
        amp *= 0.5
        freq *= 2.0
    return total / norm


def _raycast(scene: SceneSpec, origins: np.ndarray, dirs: np.ndarray):
    """Nearest hit along ``origins + s * dirs`` for ``s > 0``.

    Returns ``(s, normal, object_id)`` with ``object_id = -1`` for misses,
    ``0`` for the ground and ``k + 1`` for box ``k``.
    """
    M = len(dirs)
    best = np.full(M, np.inf)
    normal = np.zeros((M, 3))
    obj = np.full(M, -1)
    eps = 1e-9
    if scene.ground:
        dy = dirs[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (scene.ground_height - origins[:, 1]) / dy
        hit = (dy > eps) & (s > 0) & (s < best)
        best[hit] = s[hit]
        normal[hit] = (0.0, -1.0, 0.0)
        obj[hit] = 0
    for k, box in enumerate(scene.boxes):
        lo = np.asarray(box.centre) - np.asarray(box.size) / 2
        hi = np.asarray(box.centre) + np.asarray(box.size) / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (lo - origins) * inv
            t2 = (hi - origins) * inv
        tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
        tmax = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
        enter = tmin.max(axis=1)
        leave = tmax.min(axis=1)
        axis = tmin.argmax(axis=1)
        hit = (enter <= leave) & (enter > 0) & (enter < best)
        if not hit.any():
            continue
        best[hit] = enter[hit]
        n = np.zeros((hit.sum(), 3))
        ax = axis[hit]
        n[np.arange(len(ax)), ax] = -np.sign(dirs[hit, ax])
        normal[hit] = n
        obj[hit] = k + 1
    return best, normal, obj


def _shade(scene: SceneSpec, points, normal, obj) -> np.ndarray:
    light = -np.asarray(scene.light_dir, dtype=np.float64)
    light /= np.linalg.norm(light)
    rgb = np.zeros((len(points), 3))
    hit = obj >= 0
    if not hit.any():
        return rgb
    P = points[hit]
    base = np.stack(
        [_value_noise(P, scene.seed * 7 + c, scene.octaves, scene.texture_scale) for c in range(3)], axis=1
    )
    lum = _value_noise(P, scene.seed * 7 + 5, scene.octaves, scene.texture_scale * 0.5)
    albedo = 0.1 + 0.8 * (0.5 * lum[:, None] + 0.5 * base)
    tints = np.array([(1.0, 1.0, 1.0)] + [b.tint for b in scene.boxes])
    albedo *= tints[obj[hit]]
    diffuse = np.clip(normal[hit] @ light, 0.0, None)
    rgb[hit] = albedo * (0.45 + 0.55 * diffuse[:, None])
    return rgb


def render(scene: SceneSpec, cam: CameraModel, rig_to_world: RigidTransform, supersample: int = 3):
    """Ray cast one camera; returns ``(rgb (H, W, 3), z_depth (H, W), hit (H, W))``.

    Colour is the box-filtered average of ``supersample**2`` sub-pixel rays;
    depth is the z-depth of the pixel-centre ray (``FAR_PLANE`` on a miss).
    """
    cam_to_world = compose(rig_to_world, cam.extrinsics)
    R, o = cam_to_world.rotation, cam_to_world.translation
    H, W = cam.shape
    u, v = cam.pixel_grid()

    def rays(du, dv):
        d = np.stack([(u + du - cam.cx) / cam.fx, (v + dv - cam.cy) / cam.fy, np.ones_like(u)], -1)
        d = d.reshape(-1, 3) @ R.T
        return np.broadcast_to(o, d.shape), d

    O, D = rays(0.0, 0.0)
    s, _, obj = _raycast(scene, O, D)
    hit = obj >= 0
    depth = np.where(hit, s, FAR_PLANE).reshape(H, W)

    offsets = (np.arange(supersample) + 0.5) / supersample - 0.5
    rgb = np.zeros((H * W, 3))
    for dv in offsets:
        for du in offsets:
            O, D = rays(du, dv)
            ss, nn, oo = _raycast(scene, O, D)
            pts = O + np.where(np.isfinite(ss), ss, 0.0)[:, None] * D
            rgb += _shade(scene, pts, nn, oo)
    rgb /= supersample**2
    return rgb.reshape(H, W, 3), depth, hit.reshape(H, W)


# ---------------------------------------------------------------------------
# ego-body occluder


def self_occlusion_mask(height: int, width: int, fraction: float) -> BinaryMask:
    """Bottom-edge trapezoid marked 0 (occluded), everything else 1.

    The trapezoid spans the bottom ``fraction`` of the rows; its half-width
    grows linearly from ``width/4`` on its top row to ``width/2`` on the
    bottom row.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("occluder fraction must lie in [0, 1]")
    bits = np.ones((height, width), dtype=bool)
    rows = int(math.floor(fraction * height))
    if rows == 0:
        return BinaryMask(bits)
    u = np.arange(width) - (width - 1) / 2.0
    for k in range(rows):
        v = height - rows + k
        grow = (k + 1) / rows
        half = width / 4.0 + grow * width / 4.0
        bits[v, np.abs(u) <= half] = False
    return BinaryMask(bits)


def _occluder_texture(height: int, width: int, cam_index: int, timestep: int) -> np.ndarray:
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    stripes = 0.5 + 0.25 * np.sin(0.9 * u + 0.5 * v + cam_index)
    flicker = 0.15 * math.sin(2.1 * timestep + cam_index)
    g = np.clip(stripes + flicker, 0, 1)
    return np.stack([g, g * 0.95, g * 0.9], -1)


# ---------------------------------------------------------------------------
# samples


@dataclass
class MultiCamSample:
    """Synchronized frames ``t-1, t, t+1`` for every camera of a rig.

    Attributes:
        rig: cameras, index 0 canonical.
        images: ``(N, 3, H, W, C)`` in [0, 1], frames ordered t-1, t, t+1.
        gt_depth: ``(N, H, W)`` z-depth at t (``FAR_PLANE`` on misses).
        gt_valid: ``(N, H, W)`` pixels usable for evaluation.
        self_occ: ``(N, H, W)`` self-occlusion masks, 1 = keep.
        trajectory: rig-to-world at t-1, t, t+1.
    """

    rig: list
    images: np.ndarray
    gt_depth: np.ndarray
    gt_valid: np.ndarray
    self_occ: np.ndarray
    trajectory: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.rig)
        H, W = self.rig[0].shape
        if self.images.shape[:4] != (n, 3, H, W):
            raise ValueError(f"images have shape {self.images.shape}, expected ({n}, 3, {H}, {W}, C)")
        for name in ("gt_depth", "gt_valid", "self_occ"):
            if getattr(self, name).shape != (n, H, W):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected ({n}, {H}, {W})")
        if len(self.trajectory) != 3:
            raise ValueError("trajectory needs poses at t-1, t and t+1")

    @property
    def n_cameras(self) -> int:
        return len(self.rig)

    def rig_motion(self, slot: int) -> RigidTransform:
        """Rig-frame motion mapping points at t to the frame at t-1 (slot 0) or t+1 (slot 1)."""
        other = self.trajectory[0 if slot == 0 else 2]
        return compose(inverse(other), self.trajectory[1])

    def gt_ego(self, cam: int, slot: int) -> RigidTransform:
        X = self.rig[cam].extrinsics
        return compose(compose(inverse(X), self.rig_motion(slot)), X)

    def gt_pose_params(self) -> np.ndarray:
        from surroundmono.differentiation import PoseParams

        out = np.zeros((self.n_cameras, 2, 6))
        for i in range(self.n_cameras):
            for s in (0, 1):
                out[i, s] = PoseParams.from_rigid(self.gt_ego(i, s)).as_vector()
        return out

    def gt_log_depth(self) -> np.ndarray:
        return np.log(self.gt_depth)

    def eval_mask(self) -> np.ndarray:
        return self.gt_valid & self.self_occ

    def downsampled(self, factor: int) -> "MultiCamSample":
        """Box-filtered copy at ``1/factor`` resolution with matching intrinsics.

        Pixel centres are kept consistent: full-resolution ``u`` maps to
        ``(u + 0.5) / factor - 0.5``. A low-resolution pixel is kept by the
        self-occlusion mask only if every pixel it covers is kept. The
        overlapping camera pairs of the full-resolution rig are reused.
        """
        if factor == 1:
            return self
        H, W = self.rig[0].shape
        if factor < 1 or H % factor or W % factor:
            raise ValueError(f"factor {factor} must divide the image size {W}x{H}")
        h, w = H // factor, W // factor

        def blocks(a):
            return a.reshape(a.shape[:-2] + (h, factor, w, factor))

        imgs = np.moveaxis(self.images, -1, 2)  # (N, 3, C, H, W)
        imgs = np.moveaxis(blocks(imgs).mean(axis=(-3, -1)), 2, -1)
        depth = blocks(self.gt_depth).mean(axis=(-3, -1))
        valid = blocks(self.gt_valid).all(axis=(-3, -1))
        so = blocks(self.self_occ).all(axis=(-3, -1))
        rig = [
            replace(
                c,
                fx=c.fx / factor,
                fy=c.fy / factor,
                cx=(c.cx + 0.5) / factor - 0.5,
                cy=(c.cy + 0.5) / factor - 0.5,
                width=w,
                height=h,
            )
            for c in self.rig
        ]
        out = MultiCamSample(rig, imgs, depth, valid, so, self.trajectory, {**self.metadata, "downsample": factor})
        out.__dict__["_neighbours"] = self._neighbours
        return out

    @cached_property
    def _neighbours(self):
        from surroundmono.losses import overlapping_pairs

        return overlapping_pairs(self.rig) if self.n_cameras > 1 else []

    def neighbours(self) -> list[tuple[int, int]]:
        return list(self._neighbours)


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to 8-bit levels so in-memory samples equal their PNG round trip."""
    return np.round(np.clip(img, 0, 1) * 255.0) / 255.0


def make_sample(rig_spec: RigSpec | None = None, scene: SceneSpec | None = None, occluder: bool = True) -> MultiCamSample:
    rig_spec = rig_spec or RigSpec()
    scene = scene or default_scene()
    rig = build_rig(rig_spec)
    traj = scene.trajectory()
    n, (H, W) = len(rig), rig[0].shape
    images = np.zeros((n, 3, H, W, 3))
    gt_depth = np.zeros((n, H, W))
    gt_valid = np.zeros((n, H, W), dtype=bool)
    frac = rig_spec.self_occ_fraction if occluder else 0.0
    so = self_occlusion_mask(H, W, frac).bits
    for i, cam in enumerate(rig):
        for k, pose in enumerate(traj):
            rgb, depth, hit = render(scene, cam, pose)
            if frac > 0:
                rgb = np.where(so[..., None], rgb, _occluder_texture(H, W, i, k))
            images[i, k] = quantize(rgb)
            if k == 1:
                gt_depth[i] = depth
                gt_valid[i] = hit
    self_occ = np.broadcast_to(so, (n, H, W)).copy()
    meta = {"rig_spec": rig_spec.to_dict(), "scene": scene.to_dict(), "occluder": occluder}
    return MultiCamSample(rig, images, gt_depth, gt_valid, self_occ, traj, meta)


def standard_sample(seed: int = 0) -> MultiCamSample:
    """Six cameras, 96x64, ~17% adjacent overlap, ego-body occluder on."""
    return make_sample(RigSpec(), default_scene(seed))


def small_sample(seed: int = 0) -> MultiCamSample:
    """Three cameras (front, front-left, front-right), 16x12, for gradient checks."""
    spec = RigSpec(n_cameras=3, width=16, height=12, yaw_deg=(0.0, 60.0, -60.0), names=("front", "front_left", "front_right"))
    return make_sample(spec, default_scene(seed))


def spec_to_json(rig_spec: RigSpec, scene: SceneSpec, occluder: bool = True) -> str:
    return json.dumps({"rig": rig_spec.to_dict(), "scene": scene.to_dict(), "occluder": occluder}, indent=2)


def spec_from_json(text: str) -> tuple[RigSpec, SceneSpec, bool]:
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ValueError("spec must be a JSON object")
    rig = RigSpec.from_dict(doc.get("rig", {}))
    if "scene" in doc:
        scene = SceneSpec.from_dict(doc["scene"])
    else:
        scene = default_scene(int(doc.get("seed", 0)))
    return rig, scene, bool(doc.get("occluder", True))


def texture_check(sample: MultiCamSample, min_var: float = 1e-5) -> float:
    """Fraction of valid 3x3 windows in the t frames with variance below ``min_var``."""
    g = sample.images[:, 1].mean(-1)
    win = np.lib.stride_tricks.sliding_window_view(g, (3, 3), axis=(1, 2))
    var = win.var(axis=(-1, -2))
    valid = sample.eval_mask()[:, 1:-1, 1:-1]
    return float((var[valid] < min_var).mean()) if valid.any() else 1.0


__all__ = [
    "Box",
    "FAR_PLANE",
    "MultiCamSample",
    "RigSpec",
    "SceneSpec",
    "analytic_overlap_fraction",
    "build_rig",
    "default_scene",
    "make_sample",
    "render",
    "self_occlusion_mask",
    "small_sample",
    "standard_sample",
]
