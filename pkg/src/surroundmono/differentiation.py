"""Gradients of the surround-view objective.

Reverse-mode derivatives come from ``jax.value_and_grad`` over the batched
objective in :mod:`surroundmono.losses`. Masks (warp validity, non-overlap
and self-occlusion) are evaluated once at the current point and passed in as
constants, so each gradient is the derivative of a fixed, piecewise-smooth
function. At exact bilinear cell boundaries the left/lower cell is used.

:func:`finite_difference` is the independent check: central differences of
the same frozen-mask loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from surroundmono.geometry import EulerAngles, RigidTransform
from surroundmono.losses import LossBreakdown, LossWeights, Objective, Toggles


@dataclass(frozen=True)
class PoseParams:
    """Six-dof motion: translation in metres and Z-Y-X Euler angles in radians."""

    translation: tuple = (0.0, 0.0, 0.0)
    euler: tuple = (0.0, 0.0, 0.0)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.translation, float), np.asarray(self.euler, float)])

    @classmethod
    def from_vector(cls, vec) -> "PoseParams":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(tuple(vec[:3]), tuple(vec[3:6]))

    def to_rigid(self) -> RigidTransform:
        return RigidTransform(EulerAngles(*self.euler).to_rotation(), self.translation)

    @classmethod
    def from_rigid(cls, x: RigidTransform) -> "PoseParams":
        e = EulerAngles.from_rotation(x.rotation)
        return cls(tuple(x.translation), (e.phi, e.theta, e.psi))


@dataclass
class GradientBundle:
    d_log_depth: np.ndarray  # (N, H, W)
    d_pose: np.ndarray  # (N, 2, 6)
    loss_value: float
    breakdown: LossBreakdown | None = None

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.d_log_depth).all() and np.isfinite(self.d_pose).all() and np.isfinite(self.loss_value))

    def max_abs(self) -> float:
        return float(max(np.abs(self.d_log_depth).max(), np.abs(self.d_pose).max()))


def gradients(
    sample,
    log_depth,
    pose,
    weights: LossWeights | None = None,
    toggles: Toggles | None = None,
    objective: Objective | None = None,
    masks=None,
) -> GradientBundle:
    """Exact derivatives of the total loss w.r.t. log-depth and pose parameters."""
    obj = objective or Objective(sample, weights, toggles)
    if masks is None:
        masks = obj.masks(log_depth, pose)
    value, g_d, g_p, parts = obj.value_and_grad(log_depth, pose, masks)
    return GradientBundle(g_d, g_p, value, obj.to_breakdown(value, parts))


def finite_difference(objective: Objective, log_depth, pose, masks, coords, h_depth=1e-4, h_pose=1e-5):
    """Central differences at selected coordinates with masks held fixed.

    ``coords`` is a list of ``("depth", (cam, row, col))`` or
    ``("pose", (cam, slot, k))`` entries.
    """
    log_depth = np.array(log_depth, dtype=np.float64)
    pose = np.array(pose, dtype=np.float64)
    out = []
    for kind, idx in coords:
        arr, h = (log_depth, h_depth) if kind == "depth" else (pose, h_pose)
        base = arr[idx]
        arr[idx] = base + h
        f_plus = objective.value(log_depth, pose, masks)
        arr[idx] = base - h
        f_minus = objective.value(log_depth, pose, masks)
        arr[idx] = base
        out.append((f_plus - f_minus) / (2 * h))
    return np.array(out)


@dataclass
class GradCheckReport:
    coords: list
    analytic: np.ndarray
    numeric: np.ndarray
    rel_tol: float
    abs_tol: float

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.analytic - self.numeric)

    @property
    def rel_error(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.analytic), np.abs(self.numeric))
        return np.where(scale > 0, self.abs_error / np.where(scale > 0, scale, 1.0), 0.0)

    @property
    def passed_mask(self) -> np.ndarray:
        return (self.rel_error <= self.rel_tol) | (self.abs_error <= self.abs_tol)

    @property
    def ok(self) -> bool:
        return bool(self.passed_mask.all())

    def failures(self) -> list:
        return [
            (c, float(a), float(n))
            for c, a, n, ok in zip(self.coords, self.analytic, self.numeric, self.passed_mask)
            if not ok
        ]

    def summary(self) -> str:
        lines = [
            f"checked {len(self.coords)} coordinates; max rel err {self.rel_error.max():.3e}, "
            f"max abs err {self.abs_error.max():.3e}; {'PASS' if self.ok else 'FAIL'}"
        ]
        for c, a, n in self.failures():
            lines.append(f"  {c[0]} {c[1]}: analytic {a:.6e} numeric {n:.6e}")
        return "\n".join(lines)


def random_coords(shape_depth, shape_pose, n: int, rng: np.random.Generator, pose_share: float = 0.3):
    """Mix of random depth and pose coordinates (at least one of each when n >= 2)."""
    n_pose = max(1, int(round(n * pose_share))) if n >= 2 else 0
    coords = []
    for _ in range(n - n_pose):
        coords.append(("depth", tuple(int(rng.integers(0, s)) for s in shape_depth)))
    for _ in range(n_pose):
        coords.append(("pose", tuple(int(rng.integers(0, s)) for s in shape_pose)))
    return coords


def grad_check(
    sample,
    log_depth,
    pose,
    weights: LossWeights | None = None,
    toggles: Toggles | None = None,
    n_coords: int = 50,
    seed: int = 0,
    rel_tol: float = 1e-3,
    abs_tol: float = 1e-6,
    coords=None,
) -> GradCheckReport:
    obj = Objective(sample, weights, toggles)
    masks = obj.masks(log_depth, pose)
    bundle = gradients(sample, log_depth, pose, objective=obj, masks=masks)
    if coords is None:
        rng = np.random.default_rng(seed)
        coords = random_coords(np.shape(log_depth), np.shape(pose), n_coords, rng)
    analytic = np.array(
        [bundle.d_log_depth[idx] if kind == "depth" else bundle.d_pose[idx] for kind, idx in coords]
    )
    numeric = finite_difference(obj, log_depth, pose, masks, coords)
    return GradCheckReport(list(coords), analytic, numeric, rel_tol, abs_tol)
