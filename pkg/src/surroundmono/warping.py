"""View synthesis by inverse warping.

Every warp is the same operation: lift target pixels with their depth,
move them with a rigid transform and project them with the source camera.
Only the transform differs:

* temporal: the predicted ego-motion of the camera;
* spatial: the fixed relative extrinsics between two cameras;
* spatio-temporal: relative extrinsics composed with the ego-motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from surroundmono.geometry import (
    CameraModel,
    RigidTransform,
    compose,
    Z_MIN,
    relative_extrinsics,
)


@dataclass(frozen=True, eq=False)
class ImagePlane:
    """``(H, W, C)`` intensities in ``[0, 1]``, C in {1, 3}."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[..., None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ValueError(f"image must be HxW, HxWx1 or HxWx3, got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class DepthField:
    """Positive depth stored as log-depth (log metres)."""

    log_depth: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "log_depth", np.asarray(self.log_depth, dtype=np.float64))

    @classmethod
    def from_depth(cls, depth) -> "DepthField":
        depth = np.asarray(depth, dtype=np.float64)
        if np.any(depth <= 0):
            raise ValueError("depth must be strictly positive")
        return cls(np.log(depth))

    @property
    def depth(self) -> np.ndarray:
        return np.exp(self.log_depth)

    @property
    def shape(self) -> tuple[int, int]:
        return self.log_depth.shape

    def scaled(self, s: float) -> "DepthField":
        return DepthField(self.log_depth + np.log(s))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=bool))

    @classmethod
    def ones(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.bits & other.bits)

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.bits | other.bits)

    def fraction(self) -> float:
        return float(self.bits.mean())

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class WarpField:
    """Continuous source coordinates ``(H, W, 2)`` as ``(u, v)`` plus validity."""

    coords: np.ndarray
    valid: np.ndarray
    source_shape: tuple[int, int]

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


# ---------------------------------------------------------------------------
# array kernels (batched over a leading axis)


def warp_coords(depth, R, t, src_intr, dst_intr, dst_shape):
    """Source-image coordinates of every target pixel.

    Args:
        depth: ``(B, H, W)`` target z-depth.
        R, t: ``(B, 3, 3)`` and ``(B, 3)`` target-to-source transforms.
        src_intr, dst_intr: ``(B, 4)`` ``(fx, fy, cx, cy)`` of the camera
            that owns the depth map and of the camera being sampled.
        dst_shape: ``(H_s, W_s)`` of the sampled image.

    Returns:
        ``u, v, valid`` each ``(B, H, W)``.
    """
    B, H, W = depth.shape
    v0, u0 = jnp.meshgrid(jnp.arange(H, dtype=depth.dtype), jnp.arange(W, dtype=depth.dtype), indexing="ij")

    def col(a, k):
        return a[:, k][:, None, None]

    # Work on the normalized ray (x, y, 1) and the translation over depth, and
    # return the source pixel as the target pixel plus a displacement. The
    # result is the usual pi(R phi(p, d) + t) but an identity transform
    # reproduces the pixel grid bit for bit.
    x = (u0 - col(src_intr, 2)) / col(src_intr, 0)
    y = (v0 - col(src_intr, 3)) / col(src_intr, 1)
    inv_d = 1.0 / depth
    r = lambda i, j: R[:, i, j][:, None, None]  # noqa: E731
    xs = r(0, 0) * x + r(0, 1) * y + r(0, 2) + t[:, 0][:, None, None] * inv_d
    ys = r(1, 0) * x + r(1, 1) * y + r(1, 2) + t[:, 1][:, None, None] * inv_d
    zs = r(2, 0) * x + r(2, 1) * y + r(2, 2) + t[:, 2][:, None, None] * inv_d
    in_front = depth * zs > Z_MIN
    zs = jnp.where(in_front, zs, 1.0)
    u = u0 + ((col(dst_intr, 0) * (xs / zs) - col(src_intr, 0) * x) + (col(dst_intr, 2) - col(src_intr, 2)))
    v = v0 + ((col(dst_intr, 1) * (ys / zs) - col(src_intr, 1) * y) + (col(dst_intr, 3) - col(src_intr, 3)))
    Hs, Ws = dst_shape
    valid = in_front & (u >= 0) & (u <= Ws - 1) & (v >= 0) & (v <= Hs - 1)
    return u, v, valid


def bilinear_sample(images, u, v, valid):
    """Sample ``(B, Hs, Ws, C)`` images at ``(B, H, W)`` coordinates.

    The lower-left cell is used at exact integer coordinates (cell index
    ``ceil(x) - 1`` clamped to the image), so interior kinks take the left
    piece and the last row/column stays in bounds. Invalid pixels are 0.
    """
    B, Hs, Ws, C = images.shape
    u = jnp.where(valid, u, 0.0)
    v = jnp.where(valid, v, 0.0)
    x0 = jnp.clip(jnp.ceil(u) - 1, 0, Ws - 2)
    y0 = jnp.clip(jnp.ceil(v) - 1, 0, Hs - 2)
    ax = u - x0
    ay = v - y0
    xi = x0.astype(jnp.int32)
    yi = y0.astype(jnp.int32)
    flat = images.reshape(B, Hs * Ws, C)

    def gather(yy, xx):
        idx = (yy * Ws + xx).reshape(B, -1, 1)
        return jnp.take_along_axis(flat, idx, axis=1).reshape(u.shape + (C,))

    ax = ax[..., None]
    ay = ay[..., None]
    out = (
        (1 - ax) * (1 - ay) * gather(yi, xi)
        + ax * (1 - ay) * gather(yi, xi + 1)
        + (1 - ax) * ay * gather(yi + 1, xi)
        + ax * ay * gather(yi + 1, xi + 1)
    )
    return jnp.where(valid[..., None], out, 0.0)


def nearest_ones(u, v, valid, src_shape, src_mask=None):
    """Nearest-neighbour warp of a constant-one image; 0 outside the source.

    With ``src_mask`` (``(B, Hs, Ws)`` bool) the warped tensor is that mask
    instead of all-ones, so source pixels it excludes are excluded too.
    """
    Hs, Ws = src_shape
    ui = jnp.round(jnp.where(valid, u, -1.0))
    vi = jnp.round(jnp.where(valid, v, -1.0))
    inside = (ui >= 0) & (ui <= Ws - 1) & (vi >= 0) & (vi <= Hs - 1)
    out = valid & inside
    if src_mask is not None:
        B = src_mask.shape[0]
        idx = (jnp.clip(vi, 0, Hs - 1) * Ws + jnp.clip(ui, 0, Ws - 1)).astype(jnp.int32).reshape(B, -1)
        hit = jnp.take_along_axis(src_mask.reshape(B, -1), idx, axis=1).reshape(u.shape)
        out = out & hit
    return out


# ---------------------------------------------------------------------------
# value-level API


def _warp(depth: DepthField, transform: RigidTransform, cam_src: CameraModel, cam_dst: CameraModel) -> WarpField:
    if depth.shape != cam_src.shape:
        raise ValueError(f"depth shape {depth.shape} does not match camera {cam_src.shape}")
    u, v, valid = warp_coords(
        jnp.asarray(depth.depth)[None],
        jnp.asarray(transform.rotation)[None],
        jnp.asarray(transform.translation)[None],
        jnp.asarray(cam_src.intrinsics)[None],
        jnp.asarray(cam_dst.intrinsics)[None],
        cam_dst.shape,
    )
    coords = np.stack([np.asarray(u[0]), np.asarray(v[0])], axis=-1)
    return WarpField(coords, np.asarray(valid[0]), cam_dst.shape)


def warp_temporal(depth: DepthField, ego: RigidTransform, cam: CameraModel) -> WarpField:
    """Same camera, adjacent timestep; ``ego`` maps target-frame points to the context frame."""
    return _warp(depth, ego, cam, cam)


def warp_spatial(depth_i: DepthField, cam_i: CameraModel, cam_j: CameraModel) -> WarpField:
    """Camera ``i`` pixels located in camera ``j``'s image at the same timestep."""
    return _warp(depth_i, relative_extrinsics(cam_i, cam_j), cam_i, cam_j)


def warp_spatiotemporal(
    depth_i: DepthField, ego_i: RigidTransform, cam_i: CameraModel, cam_j: CameraModel
) -> WarpField:
    """Camera ``i`` pixels located in camera ``j``'s image at an adjacent timestep.

    Uses the single composed transform ``X_{i->j} o ego_i``; reduces exactly to
    :func:`warp_spatial` for an identity ego-motion and to
    :func:`warp_temporal` when both cameras coincide.
    """
    return _warp(depth_i, compose(relative_extrinsics(cam_i, cam_j), ego_i), cam_i, cam_j)


def synthesize(source: ImagePlane, warp: WarpField) -> tuple[ImagePlane, BinaryMask]:
    if (source.height, source.width) != warp.source_shape:
        raise ValueError("warp was computed for a source of a different size")
    out = bilinear_sample(
        jnp.asarray(source.data)[None],
        jnp.asarray(warp.coords[..., 0])[None],
        jnp.asarray(warp.coords[..., 1])[None],
        jnp.asarray(warp.valid)[None],
    )
    return ImagePlane(np.asarray(out[0])), BinaryMask(warp.valid.copy())


def non_overlap_mask(warp: WarpField) -> BinaryMask:
    bits = nearest_ones(
        jnp.asarray(warp.coords[..., 0]), jnp.asarray(warp.coords[..., 1]), jnp.asarray(warp.valid), warp.source_shape
    )
    return BinaryMask(np.asarray(bits))


def warp_mask(mask: BinaryMask, warp: WarpField) -> BinaryMask:
    """Nearest-neighbour pull of a source-image mask; pixels that leave the source are 0."""
    if mask.bits.shape != warp.source_shape:
        raise ValueError("mask was not made for this warp's source image")
    bits = nearest_ones(
        jnp.asarray(warp.coords[..., 0])[None],
        jnp.asarray(warp.coords[..., 1])[None],
        jnp.asarray(warp.valid)[None],
        warp.source_shape,
        jnp.asarray(mask.bits)[None],
    )
    return BinaryMask(np.asarray(bits[0]))
