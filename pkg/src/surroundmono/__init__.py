"""Multi-camera self-supervised depth: surround-view photometric objective,
direct depth/ego-motion optimization and scale-aware evaluation."""

import os

THREADS_ENV = "SURROUNDMONO_THREADS"


def _apply_thread_limit() -> None:
    """Honour ``SURROUNDMONO_THREADS`` before jax and numba start their pools."""
    n = os.environ.get(THREADS_ENV)
    if not n:
        return
    n = str(max(1, int(n)))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ.setdefault(var, n)
    flags = os.environ.get("XLA_FLAGS", "")
    if "intra_op_parallelism_threads" not in flags:
        os.environ["XLA_FLAGS"] = f"{flags} --xla_cpu_multi_thread_eigen={'false' if n == '1' else 'true'} intra_op_parallelism_threads={n}".strip()


_apply_thread_limit()

import jax  # noqa: E402

# Every differentiable kernel assumes double precision.
jax.config.update("jax_enable_x64", True)

from surroundmono.geometry import (  # noqa: E402
    CameraModel,
    EulerAngles,
    RigidTransform,
    compose,
    inverse,
    project,
    relative_extrinsics,
    to_canonical,
    unproject,
)
from surroundmono.losses import LossBreakdown, LossWeights  # noqa: E402
from surroundmono.optimizer import DirectDepthEstimator, OptimConfig, optimize  # noqa: E402
from surroundmono.synthetic import MultiCamSample, make_sample, standard_sample  # noqa: E402

__all__ = [
    "CameraModel",
    "DirectDepthEstimator",
    "EulerAngles",
    "LossBreakdown",
    "LossWeights",
    "MultiCamSample",
    "OptimConfig",
    "RigidTransform",
    "compose",
    "inverse",
    "make_sample",
    "optimize",
    "project",
    "relative_extrinsics",
    "standard_sample",
    "to_canonical",
    "unproject",
]

__version__ = "0.1.0"
