"""Direct minimization of the surround-view objective.

There is no network here: per-pixel log-depths and per-camera six-dof
motions are the free variables, updated with Adam. Masks are recomputed
from the current estimate at every step and held fixed within it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from surroundmono.losses import LossBreakdown, LossWeights, Objective, Toggles

log = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    """A non-finite loss or gradient was produced during optimization."""


DIRECT_LAMBDA_D = 0.01
MIN_LEVEL_SIZE = 6


@dataclass(frozen=True)
class OptimConfig:
    """Optimizer settings.

    ``steps`` is the total number of Adam steps. They are split evenly over
    the ``pyramid`` levels (image downsampling factors, coarsest first), the
    remainder going to the last level. ``pose_lr`` defaults to ``lr``.
    """

    steps: int = 1200
    lr: float = 0.02
    pose_lr: float | None = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    d_min: float = 0.5
    d_max: float = 200.0
    seed: int = 0
    jitter: float = 0.05
    pose_noise: float = 0.0
    pyramid: tuple = (8, 4, 2, 1)
    use_spatial: bool = True
    use_spatiotemporal: bool = True
    use_pcc: bool = True
    use_self_occ_masks: bool = True

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.lr <= 0 or (self.pose_lr is not None and self.pose_lr <= 0):
            raise ValueError("learning rate must be positive")
        if not (0 < self.d_min < self.d_max):
            raise ValueError("depth bounds must satisfy 0 < d_min < d_max")
        if self.steps < 0:
            raise ValueError("step count must be non-negative")
        object.__setattr__(self, "pyramid", tuple(int(f) for f in self.pyramid))
        if not self.pyramid or any(f < 1 for f in self.pyramid) or self.pyramid[-1] != 1:
            raise ValueError("pyramid factors must be positive and end at full resolution (1)")

    @property
    def toggles(self) -> Toggles:
        return Toggles(self.use_spatial, self.use_spatiotemporal, self.use_pcc, self.use_self_occ_masks)

    @property
    def effective_pose_lr(self) -> float:
        return self.lr if self.pose_lr is None else self.pose_lr

    def schedule(self, shape: tuple[int, int] | None = None) -> list[tuple[int, int]]:
        """``(factor, steps)`` per pyramid level.

        With an image ``shape``, factors that do not divide it or leave fewer
        than ``MIN_LEVEL_SIZE`` pixels along an axis are dropped first.
        """
        levels = [
            f
            for f in self.pyramid
            if shape is None or f == 1 or (shape[0] % f == 0 and shape[1] % f == 0 and min(shape) // f >= MIN_LEVEL_SIZE)
        ]
        n = len(levels)
        base = self.steps // n
        counts = [base] * n
        counts[-1] += self.steps - base * n
        return list(zip(levels, counts))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pyramid"] = list(self.pyramid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        d = dict(d)
        if "pyramid" in d:
            d["pyramid"] = tuple(d["pyramid"])
        return cls(**d)


PRESETS = {
    "fsm": {},
    "fsm-no-stc": {"use_spatiotemporal": False},
    "fsm-no-pcc": {"use_pcc": False},
    "fsm-no-mask": {"use_self_occ_masks": False},
    "mono": {"use_spatial": False, "use_spatiotemporal": False, "use_pcc": False},
    "mono-no-mask": {"use_spatial": False, "use_spatiotemporal": False, "use_pcc": False, "use_self_occ_masks": False},
}


def preset(name: str, weights: LossWeights | None = None, **overrides) -> tuple[LossWeights, OptimConfig]:
    """Loss weights and optimizer config for one ablation row.

    Without explicit ``weights`` the smoothness weight is ``DIRECT_LAMBDA_D``:
    with per-pixel depths there is no network prior, and the training-time
    value leaves low-parallax pixels free to drift.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = OptimConfig(**{**PRESETS[name], **overrides})
    weights = weights or LossWeights(lambda_d=DIRECT_LAMBDA_D)
    if not cfg.use_spatial and not cfg.use_spatiotemporal:
        weights = replace(weights, lambda_s=0.0)
    return weights, cfg


@dataclass
class OptimState:
    log_depth: np.ndarray
    pose: np.ndarray
    m_depth: np.ndarray
    v_depth: np.ndarray
    m_pose: np.ndarray
    v_pose: np.ndarray
    step: int = 0
    level_step: int = 0
    history: list = field(default_factory=list)

    @property
    def depth(self) -> np.ndarray:
        return np.exp(self.log_depth)


def init_state(sample, config: OptimConfig) -> OptimState:
    """Constant log-depth at the geometric mean of the bounds plus seeded jitter; identity poses."""
    rng = np.random.default_rng(config.seed)
    n = sample.n_cameras
    H, W = sample.rig[0].shape
    mid = 0.5 * (math.log(config.d_min) + math.log(config.d_max))
    log_depth = np.full((n, H, W), mid)
    if config.jitter > 0:
        log_depth = log_depth + config.jitter * rng.standard_normal((n, H, W))
    log_depth = np.clip(log_depth, math.log(config.d_min), math.log(config.d_max))
    pose = np.zeros((n, 2, 6))
    if config.pose_noise > 0:
        pose = pose + config.pose_noise * rng.standard_normal(pose.shape)
    return OptimState(
        log_depth=log_depth,
        pose=pose,
        m_depth=np.zeros_like(log_depth),
        v_depth=np.zeros_like(log_depth),
        m_pose=np.zeros_like(pose),
        v_pose=np.zeros_like(pose),
    )


def adam_update(x, g, m, v, t: int, lr: float, beta1: float, beta2: float, eps: float):
    """One Adam step at iteration ``t`` (1-based); returns ``(x, m, v)``."""
    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return x - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def _check_finite(value, g_d, g_p, breakdown: LossBreakdown):
    if np.isfinite(value) and np.isfinite(g_d).all() and np.isfinite(g_p).all():
        return
    bad = [k for k in LossBreakdown.SCALAR_FIELDS if not np.isfinite(getattr(breakdown, k))]
    if not np.isfinite(g_d).all():
        bad.append("d_log_depth")
    if not np.isfinite(g_p).all():
        bad.append("d_pose")
    raise NumericalFailure(f"non-finite values in: {', '.join(bad) or 'unknown term'}")


def step(state: OptimState, objective: Objective, config: OptimConfig) -> OptimState:
    """One Adam update on the objective's own resolution; masks from the current point."""
    value, g_d, g_p, parts, _ = objective.fused_value_and_grad(state.log_depth, state.pose)
    breakdown = objective.to_breakdown(value, parts)
    _check_finite(value, g_d, g_p, breakdown)
    t = state.step + 1
    k = state.level_step + 1
    b = (config.beta1, config.beta2, config.eps)
    log_depth, m_d, v_d = adam_update(state.log_depth, g_d, state.m_depth, state.v_depth, k, config.lr, *b)
    pose, m_p, v_p = adam_update(state.pose, g_p, state.m_pose, state.v_pose, t, config.effective_pose_lr, *b)
    log_depth = np.clip(log_depth, math.log(config.d_min), math.log(config.d_max))
    state.history.append(breakdown)
    return OptimState(log_depth, pose, m_d, v_d, m_p, v_p, t, k, state.history)


def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Linear interpolation between pixel centres, clamped at the borders."""
    x = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
    U = np.zeros((n_out, n_in))
    if n_in == 1:
        U[:, 0] = 1.0
        return U
    i0 = np.minimum(np.floor(x).astype(int), n_in - 2)
    f = x - i0
    U[np.arange(n_out), i0] = 1 - f
    U[np.arange(n_out), i0 + 1] += f
    return U


def resize_log_depth(log_depth: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Resample ``(N, h, w)`` log-depth to ``shape``: block means when shrinking, bilinear when growing."""
    n, h, w = log_depth.shape
    H, W = shape
    if (h, w) == (H, W):
        return log_depth.copy()
    if h % H == 0 and w % W == 0:
        fy, fx = h // H, w // W
        return log_depth.reshape(n, H, fy, W, fx).mean(axis=(2, 4))
    return _interp_matrix(H, h) @ log_depth @ _interp_matrix(W, w).T


def _to_level(state: OptimState, shape) -> OptimState:
    ld = resize_log_depth(state.log_depth, shape)
    return replace(state, log_depth=ld, m_depth=np.zeros_like(ld), v_depth=np.zeros_like(ld), level_step=0)


@dataclass
class OptimResult:
    log_depth: np.ndarray
    pose: np.ndarray
    trace: list
    trace_levels: list
    final: LossBreakdown
    config: OptimConfig
    weights: LossWeights

    @property
    def depth(self) -> np.ndarray:
        return np.exp(self.log_depth)


def optimize(sample, weights: LossWeights | None = None, config: OptimConfig | None = None, callback=None) -> OptimResult:
    """Coarse-to-fine Adam over the pyramid levels of ``config``.

    Each level optimizes the full objective on a box-filtered copy of the
    sample; its depth is upsampled to seed the next level, poses and their
    Adam moments carry over. The last level is the sample itself.
    """
    config = config or OptimConfig()
    weights = weights or LossWeights()
    state = init_state(sample, config)
    full_shape = sample.rig[0].shape
    levels = []
    objective = None
    for factor, n_steps in config.schedule(full_shape):
        if n_steps == 0:
            continue
        level_sample = sample.downsampled(factor)
        objective = Objective(level_sample, weights, config.toggles)
        state = _to_level(state, level_sample.rig[0].shape)
        for _ in range(n_steps):
            state = step(state, objective, config)
            levels.append(factor)
            if callback is not None:
                callback(state)
        log.debug("level %d done at step %d, loss %.6f", factor, state.step, state.history[-1].total)
    log_depth = resize_log_depth(state.log_depth, full_shape) if state.log_depth.shape[1:] != full_shape else state.log_depth
    log_depth = np.clip(log_depth, math.log(config.d_min), math.log(config.d_max))
    final_obj = Objective(sample, weights, config.toggles)
    final = final_obj.breakdown(log_depth, state.pose)
    return OptimResult(log_depth, state.pose, state.history, levels, final, config, final_obj.weights)


class DirectDepthEstimator(BaseEstimator):
    """Estimator wrapper: ``fit`` optimizes depth and motion for one sample.

    Parameters mirror :class:`OptimConfig` plus the loss weights, so the
    estimator works with ``get_params`` / ``set_params`` / ``clone``.
    """

    def __init__(
        self,
        preset: str = "fsm",
        steps: int = 1200,
        lr: float = 0.02,
        pose_lr: float | None = 0.01,
        pyramid: tuple = (8, 4, 2, 1),
        seed: int = 0,
        d_min: float = 0.5,
        d_max: float = 200.0,
        jitter: float = 0.05,
        pose_noise: float = 0.0,
        alpha: float = 0.85,
        alpha_t: float = 0.1,
        alpha_r: float = 0.1,
        lambda_s: float = 0.1,
        lambda_t: float = 1.0,
        lambda_d: float = DIRECT_LAMBDA_D,
    ):
        self.preset = preset
        self.steps = steps
        self.lr = lr
        self.pose_lr = pose_lr
        self.pyramid = pyramid
        self.seed = seed
        self.d_min = d_min
        self.d_max = d_max
        self.jitter = jitter
        self.pose_noise = pose_noise
        self.alpha = alpha
        self.alpha_t = alpha_t
        self.alpha_r = alpha_r
        self.lambda_s = lambda_s
        self.lambda_t = lambda_t
        self.lambda_d = lambda_d

    def _configure(self) -> tuple[LossWeights, OptimConfig]:
        weights = LossWeights(self.alpha, self.alpha_t, self.alpha_r, self.lambda_s, self.lambda_t, self.lambda_d)
        return preset(
            self.preset,
            weights,
            steps=self.steps,
            lr=self.lr,
            pose_lr=self.pose_lr,
            pyramid=tuple(self.pyramid),
            seed=self.seed,
            d_min=self.d_min,
            d_max=self.d_max,
            jitter=self.jitter,
            pose_noise=self.pose_noise,
        )

    def fit(self, sample, y=None):
        _validate_sample(sample)
        weights, config = self._configure()
        result = optimize(sample, weights, config)
        self.log_depth_ = result.log_depth
        self.pose_ = result.pose
        self.trace_ = result.trace
        self.final_loss_ = result.final
        self.n_cameras_ = sample.n_cameras
        return self

    def _check_fitted(self):
        if not hasattr(self, "log_depth_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("call fit() before using this estimator")

    def predict(self, sample=None) -> np.ndarray:
        """Depth maps ``(N, H, W)`` of the fitted sample."""
        self._check_fitted()
        if sample is not None and sample.n_cameras != self.n_cameras_:
            raise ValueError("sample does not match the fitted rig")
        return np.exp(self.log_depth_)

    def score(self, sample, y=None, protocol: str = "shared") -> float:
        """Negative average Abs Rel against the sample's ground truth (higher is better)."""
        from surroundmono.evaluation import evaluate_rig

        pred = self.predict(sample)
        rows, _ = evaluate_rig(list(pred), list(sample.gt_depth), list(sample.eval_mask()), protocol)
        return -rows[-1][1].abs_rel


def _validate_sample(sample):
    for name in ("rig", "images", "self_occ", "trajectory"):
        if not hasattr(sample, name):
            raise TypeError(f"expected a MultiCamSample, got {type(sample).__name__} without '{name}'")
    imgs = np.asarray(sample.images)
    if not np.isfinite(imgs).all() or imgs.min() < 0 or imgs.max() > 1:
        raise ValueError("sample images must be finite and lie in [0, 1]")
