"""Rigid transforms, Euler angles and pinhole cameras.

Conventions used throughout the package:

* camera frames are optical frames (x right, y down, z forward);
* a camera's extrinsics map camera coordinates into the rig frame, so the
  relative transform from camera ``i`` to camera ``j`` is ``X_j^-1 X_i``;
* Euler angles are intrinsic Z-Y-X: ``R = Rz(psi) @ Ry(theta) @ Rx(phi)``;
* pixel centres sit on integer coordinates.

The batched ``*_array`` kernels are written against ``jax.numpy`` so the
differentiable objective and the value-level API share one implementation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jax.numpy as jnp
import numpy as np

Z_MIN = 1e-6
GIMBAL_MARGIN = 1e-3
_ORTHO_DRIFT = 1e-12


# ---------------------------------------------------------------------------
# array kernels


def rotation_from_euler_array(angles):
    """Batched Z-Y-X Euler angles ``(..., 3)`` as ``(phi, theta, psi)`` to ``(..., 3, 3)``."""
    phi, theta, psi = angles[..., 0], angles[..., 1], angles[..., 2]
    cf, sf = jnp.cos(phi), jnp.sin(phi)
    ct, st = jnp.cos(theta), jnp.sin(theta)
    cp, sp = jnp.cos(psi), jnp.sin(psi)
    rows = [
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ]
    return jnp.stack([jnp.stack(r, axis=-1) for r in rows], axis=-2)


def euler_from_rotation_array(R):
    """Inverse of :func:`rotation_from_euler_array`, valid away from gimbal lock."""
    phi = jnp.arctan2(R[..., 2, 1], R[..., 2, 2])
    theta = jnp.arctan2(-R[..., 2, 0], jnp.sqrt(R[..., 0, 0] ** 2 + R[..., 1, 0] ** 2))
    psi = jnp.arctan2(R[..., 1, 0], R[..., 0, 0])
    return jnp.stack([phi, theta, psi], axis=-1)


def compose_arrays(Ra, ta, Rb, tb):
    """``a o b`` for batched ``(R, t)`` pairs: apply ``b`` first."""
    R = Ra @ Rb
    t = jnp.einsum("...ij,...j->...i", Ra, tb) + ta
    return R, t


def invert_arrays(R, t):
    Rt = jnp.swapaxes(R, -1, -2)
    return Rt, -jnp.einsum("...ij,...j->...i", Rt, t)


def unproject_array(u, v, depth, fx, fy, cx, cy):
    """Lift pixel grids to camera-frame points; returns ``(X, Y, Z)``."""
    return (u - cx) / fx * depth, (v - cy) / fy * depth, depth


def project_array(X, Y, Z, fx, fy, cx, cy):
    """Perspective projection with a guarded divide.

    Returns ``(u, v, in_front)``. Points with ``Z <= Z_MIN`` are flagged and
    divided by 1 instead, which keeps gradients finite on masked pixels.
    """
    in_front = Z > Z_MIN
    Zs = jnp.where(in_front, Z, 1.0)
    return fx * X / Zs + cx, fy * Y / Zs + cy, in_front


# ---------------------------------------------------------------------------
# value types


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """An element of SE(3): ``p -> rotation @ p + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, M) -> "RigidTransform":
        M = np.asarray(M, dtype=np.float64)
        if M.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {M.shape}")
        if not np.allclose(M[3], [0, 0, 0, 1]):
            raise ValueError("bottom row of a rigid transform must be [0, 0, 0, 1]")
        return cls(M[:3, :3], M[:3, 3])

    @classmethod
    def from_euler(cls, translation, euler) -> "RigidTransform":
        return cls(EulerAngles(*euler).to_rotation(), translation)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def inverse(self) -> "RigidTransform":
        return inverse(self)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def apply(self, points) -> np.ndarray:
        """Transform ``(..., 3)`` points."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def rotation_angle(self) -> float:
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.arccos(np.clip(c, -1.0, 1.0)))

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)) and not self.translation.any())

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return ``a o b``, the transform that applies ``b`` and then ``a``."""
    R = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_DRIFT:
        R = _orthonormalize(R)
    return RigidTransform(R, t)


def inverse(x: RigidTransform) -> RigidTransform:
    Rt = x.rotation.T
    return RigidTransform(Rt, -Rt @ x.translation)


def to_canonical(pose: RigidTransform, X_i: RigidTransform, X_j: RigidTransform) -> RigidTransform:
    """Express a motion predicted in camera ``i``'s frame in camera ``j``'s frame.

    Computes ``X_j^-1 X_i pose X_i^-1 X_j``. When both extrinsics are the same
    transform the pose is returned untouched.
    """
    if X_i == X_j:
        return pose
    rel = relative(X_i, X_j)
    return compose(compose(rel, pose), inverse(rel))


def relative(X_i: RigidTransform, X_j: RigidTransform) -> RigidTransform:
    """``X_j^-1 X_i``: maps camera-``i`` coordinates into camera ``j``."""
    if X_i == X_j:
        return RigidTransform.identity()
    return compose(inverse(X_j), X_i)


@dataclass(frozen=True)
class EulerAngles:
    """Intrinsic Z-Y-X angles in radians (roll ``phi``, pitch ``theta``, yaw ``psi``)."""

    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    near_gimbal_lock: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi], dtype=np.float64)

    def to_rotation(self) -> np.ndarray:
        return np.asarray(rotation_from_euler_array(jnp.asarray(self.as_array())))

    @classmethod
    def from_rotation(cls, R) -> "EulerAngles":
        """Extract angles; flags (but does not reject) near-singular pitch."""
        R = np.asarray(R, dtype=np.float64)
        phi, theta, psi = (float(a) for a in np.asarray(euler_from_rotation_array(jnp.asarray(R))))
        locked = abs(theta) >= math.pi / 2 - GIMBAL_MARGIN
        return cls(phi, theta, psi, near_gimbal_lock=locked)


@dataclass(frozen=True)
class CameraModel:
    """Zero-skew pinhole camera with its camera-to-rig extrinsics."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsics: RigidTransform = field(default_factory=RigidTransform.identity)
    name: str = ""

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 2 or self.height < 2:
            raise ValueError("images must be at least 2x2 pixels")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def intrinsics(self) -> tuple[float, float, float, float]:
        return self.fx, self.fy, self.cx, self.cy

    def pixel_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """``(u, v)`` grids of shape ``(height, width)``."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        return u, v

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "extrinsics": self.extrinsics.matrix().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        missing = [k for k in ("fx", "fy", "cx", "cy", "width", "height", "extrinsics") if k not in d]
        if missing:
            raise ValueError(f"camera entry missing field(s): {', '.join(missing)}")
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            extrinsics=RigidTransform.from_matrix(d["extrinsics"]),
            name=str(d.get("name", "")),
        )


def relative_extrinsics(cam_i: CameraModel, cam_j: CameraModel) -> RigidTransform:
    return relative(cam_i.extrinsics, cam_j.extrinsics)


def unproject(p, depth, cam: CameraModel) -> np.ndarray:
    """Lift pixel ``p = (u, v)`` at z-depth ``depth`` to a camera-frame point."""
    p = np.asarray(p, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise ValueError("depth must be strictly positive")
    X, Y, Z = unproject_array(p[..., 0], p[..., 1], depth, *cam.intrinsics)
    return np.stack([np.asarray(X), np.asarray(Y), np.broadcast_to(np.asarray(Z), np.shape(X))], axis=-1)


def project(P, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame points; returns ``(pixels, in_front)``.

    Points behind the camera (or closer than ``Z_MIN``) are flagged, never raised.
    """
    P = np.asarray(P, dtype=np.float64)
    u, v, ok = project_array(P[..., 0], P[..., 1], P[..., 2], *cam.intrinsics)
    return np.stack([np.asarray(u), np.asarray(v)], axis=-1), np.asarray(ok)


# ---------------------------------------------------------------------------
# rig serialization


def rig_to_json(cameras, path=None) -> str:
    text = json.dumps({"cameras": [c.to_dict() for c in cameras]}, indent=2)
    if path is not None:
        Path(path).write_text(text)
    return text


def rig_from_json(source) -> list[CameraModel]:
    """Parse a rig from a JSON string, dict or file path."""
    if isinstance(source, dict):
        doc = source
    else:
        p = Path(source) if not str(source).lstrip().startswith("{") else None
        doc = json.loads(p.read_text() if p is not None else source)
    if "cameras" not in doc:
        raise ValueError("rig document has no 'cameras' field")
    return [CameraModel.from_dict(c) for c in doc["cameras"]]
