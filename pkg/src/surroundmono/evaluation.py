"""Depth metrics, median-scaling protocols and pointcloud assembly."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from surroundmono.geometry import CameraModel, unproject

DEFAULT_CAP = 200.0
PROTOCOLS = ("none", "per-frame", "shared")


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    delta_125: float
    count: int
    empty: bool = False

    @classmethod
    def empty_result(cls) -> "DepthMetrics":
        return cls(0.0, 0.0, 0.0, 0.0, 0, empty=True)

    def as_dict(self) -> dict:
        return asdict(self)


def _depth_array(x) -> np.ndarray:
    if hasattr(x, "depth"):
        return np.asarray(x.depth, dtype=np.float64)
    return np.asarray(x, dtype=np.float64)


def _bits(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    return np.asarray(getattr(mask, "bits", mask), dtype=bool)


def evaluation_mask(gt, valid=None, cap: float = DEFAULT_CAP) -> np.ndarray:
    gt = _depth_array(gt)
    return _bits(valid, gt.shape) & (gt > 0) & (gt <= cap)


def compute_metrics(pred, gt, valid=None, cap: float = DEFAULT_CAP) -> DepthMetrics:
    """Abs Rel, Sq Rel, RMSE and the 1.25 inlier ratio over ``valid`` pixels with ``0 < gt <= cap``."""
    pred, gt = _depth_array(pred), _depth_array(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    if cap <= 0:
        raise ValueError("range cap must be positive")
    m = evaluation_mask(gt, valid, cap)
    if not m.any():
        return DepthMetrics.empty_result()
    d, g = pred[m], gt[m]
    err = d - g
    ratio = np.maximum(d / g, g / d)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err**2 / g)),
        rmse=float(np.sqrt(np.mean(err**2))),
        delta_125=float(np.mean(ratio < 1.25)),
        count=int(m.sum()),
    )


def lower_median(values) -> float:
    """Median that picks the lower middle element of an even-sized pool."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("median of an empty pool")
    return float(v[(v.size - 1) // 2])


def _factor(pred_pool, gt_pool) -> float:
    mp = lower_median(pred_pool)
    if mp == 0:
        raise ValueError("median prediction is zero; cannot scale")
    return lower_median(gt_pool) / mp


def per_frame_median_scale(pred, gt, valid=None, cap: float = DEFAULT_CAP):
    """Scale one prediction by ``med(gt) / med(pred)``; returns ``(scaled, factor)``."""
    pred, gt = _depth_array(pred), _depth_array(gt)
    m = evaluation_mask(gt, valid, cap)
    if not m.any():
        raise ValueError("no valid pixels to compute a median scale")
    f = _factor(pred[m], gt[m])
    return pred * f, f


def shared_median_scale(preds, gts, valids=None, cap: float = DEFAULT_CAP):
    """One factor for all cameras of a timestep, from pooled medians.

    Returns ``(scaled_preds, gamma)``.
    """
    preds = [_depth_array(p) for p in preds]
    gts = [_depth_array(g) for g in gts]
    if valids is None:
        valids = [None] * len(preds)
    masks = [evaluation_mask(g, v, cap) for g, v in zip(gts, valids)]
    pool_p = np.concatenate([p[m] for p, m in zip(preds, masks)])
    pool_g = np.concatenate([g[m] for g, m in zip(gts, masks)])
    if pool_p.size == 0:
        raise ValueError("no valid pixels to compute a shared median scale")
    gamma = _factor(pool_p, pool_g)
    return [p * gamma for p in preds], gamma


def evaluate_rig(preds, gts, valids=None, protocol: str = "none", names=None, cap: float = DEFAULT_CAP):
    """Per-camera metrics plus an ``Avg`` row under one scaling protocol.

    Returns ``(rows, factors)`` where rows is a list of ``(name, DepthMetrics)``.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")
    n = len(preds)
    names = list(names) if names is not None else [f"cam{i}" for i in range(n)]
    valids = valids if valids is not None else [None] * n
    if protocol == "none":
        scaled, factors = [_depth_array(p) for p in preds], [1.0] * n
    elif protocol == "per-frame":
        pairs = [per_frame_median_scale(p, g, v, cap) for p, g, v in zip(preds, gts, valids)]
        scaled, factors = [s for s, _ in pairs], [f for _, f in pairs]
    else:
        scaled, gamma = shared_median_scale(preds, gts, valids, cap)
        factors = [gamma] * n
    rows = [(nm, compute_metrics(s, g, v, cap)) for nm, s, g, v in zip(names, scaled, gts, valids)]
    full = [m for _, m in rows if not m.empty]
    if full:
        avg = DepthMetrics(
            abs_rel=float(np.mean([m.abs_rel for m in full])),
            sq_rel=float(np.mean([m.sq_rel for m in full])),
            rmse=float(np.mean([m.rmse for m in full])),
            delta_125=float(np.mean([m.delta_125 for m in full])),
            count=int(sum(m.count for m in full)),
        )
    else:
        avg = DepthMetrics.empty_result()
    rows.append(("Avg", avg))
    return rows, factors


def metrics_csv(rows, protocol: str, factors=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["camera", "protocol", "scale", "abs_rel", "sq_rel", "rmse", "delta_125", "count"])
    factors = list(factors or []) + [float("nan")] * len(rows)
    for (name, m), f in zip(rows, factors):
        scale = "" if name == "Avg" else f"{f:.10g}"
        if m.empty:
            w.writerow([name, protocol, scale, "", "", "", "", 0])
        else:
            w.writerow([name, protocol, scale, f"{m.abs_rel:.10g}", f"{m.sq_rel:.10g}", f"{m.rmse:.10g}", f"{m.delta_125:.10g}", m.count])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# pointclouds


@dataclass
class PointCloud:
    points: np.ndarray  # (M, 3) metres, rig frame
    colors: np.ndarray  # (M, 3) uint8

    def __len__(self) -> int:
        return len(self.points)


def assemble_pointcloud(depths, images, rig: list[CameraModel], masks=None) -> PointCloud:
    """Lift every kept pixel with its depth and move it into the rig frame.

    No filtering, merging or alignment is applied.
    """
    pts, cols = [], []
    for k, (d, cam) in enumerate(zip(depths, rig)):
        d = _depth_array(d)
        if d.shape != cam.shape:
            raise ValueError(f"depth for camera {cam.name or k} has shape {d.shape}, expected {cam.shape}")
        m = _bits(None if masks is None else masks[k], d.shape) & (d > 0)
        u, v = cam.pixel_grid()
        if not m.any():
            continue
        P = unproject(np.stack([u[m], v[m]], -1), d[m], cam)
        pts.append(cam.extrinsics.apply(P))
        img = np.asarray(getattr(images[k], "data", images[k]), dtype=np.float64)
        if img.ndim == 2:
            img = img[..., None]
        c = img[m]
        if c.shape[1] == 1:
            c = np.repeat(c, 3, axis=1)
        cols.append(np.round(np.clip(c, 0, 1) * 255).astype(np.uint8))
    if not pts:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8))
    return PointCloud(np.concatenate(pts), np.concatenate(cols))


_PLY_DTYPE = np.dtype(
    [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1")]
)


def write_ply(cloud: PointCloud, path) -> None:
    """Binary little-endian PLY with float xyz and uchar rgb."""
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    rec = np.zeros(len(cloud), dtype=_PLY_DTYPE)
    if len(cloud):
        rec["x"], rec["y"], rec["z"] = cloud.points.T.astype(np.float32)
        rec["red"], rec["green"], rec["blue"] = cloud.colors.T
    with open(Path(path), "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rec.tobytes())
