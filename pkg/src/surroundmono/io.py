"""On-disk formats: 8-bit PNG images and masks, little-endian PFM depth, JSON metadata.

A sample directory holds, for every camera ``i``::

    cam{i}/t-1.png  cam{i}/t.png  cam{i}/t+1.png
    cam{i}/gt_depth.pfm
    cam{i}/self_occ.png

plus ``rig.json`` and ``trajectory.json`` at the top level.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from surroundmono.geometry import RigidTransform, rig_from_json, rig_to_json

FRAME_NAMES = ("t-1", "t", "t+1")


class DataError(ValueError):
    """Malformed or missing input data."""


# ---------------------------------------------------------------------------
# PNG


def write_png(path, image) -> None:
    """Write ``(H, W)``, ``(H, W, 1)`` or ``(H, W, 3)`` values in [0, 1] (or bool) as 8-bit PNG."""
    a = np.asarray(image)
    if a.dtype == bool:
        a = a.astype(np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[..., 0]
    if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise ValueError(f"cannot write image of shape {a.shape}")
    u8 = np.round(np.clip(a, 0, 1) * 255.0).astype(np.uint8)
    Image.fromarray(u8, mode="L" if u8.ndim == 2 else "RGB").save(Path(path), format="PNG", optimize=False)


def read_png(path) -> np.ndarray:
    """Float image in [0, 1]; grayscale files give ``(H, W)``, colour ``(H, W, 3)``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.float64) / 255.0


def write_mask(path, mask) -> None:
    write_png(path, np.asarray(getattr(mask, "bits", mask), dtype=bool))


def read_mask(path) -> np.ndarray:
    a = read_png(path)
    if a.ndim == 3:
        a = a.mean(axis=-1)
    return a >= 0.5


# ---------------------------------------------------------------------------
# PFM


def write_pfm(path, data) -> None:
    """Little-endian 32-bit PFM. ``(H, W)`` arrays are grayscale ("Pf"), ``(H, W, 3)`` colour ("PF").

    Rows are stored bottom to top, as the format requires.
    """
    a = np.asarray(data, dtype="<f4")
    if a.ndim == 2:
        tag = "Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = "PF"
    else:
        raise ValueError(f"PFM holds (H, W) or (H, W, 3) arrays, got {a.shape}")
    H, W = a.shape[:2]
    with open(Path(path), "wb") as fh:
        fh.write(f"{tag}\n{W} {H}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag not in (b"Pf", b"PF"):
            raise DataError(f"{path}: not a PFM file")
        dims = fh.readline().split()
        scale = float(fh.readline().strip())
        W, H = int(dims[0]), int(dims[1])
        ch = 3 if tag == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        raw = np.frombuffer(fh.read(), dtype=dtype)
    if raw.size != H * W * ch:
        raise DataError(f"{path}: expected {H * W * ch} values, found {raw.size}")
    a = raw.reshape((H, W, ch) if ch == 3 else (H, W))[::-1]
    return a.astype(np.float64)


# ---------------------------------------------------------------------------
# JSON


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def poses_to_json(pose: np.ndarray, names=None) -> dict:
    """Per-camera ego-motion parameters ``(N, 2, 6)`` as a JSON document."""
    from surroundmono.differentiation import PoseParams

    pose = np.asarray(pose, dtype=np.float64)
    names = list(names) if names is not None else [f"cam{i}" for i in range(len(pose))]
    cams = []
    for name, p in zip(names, pose):
        entry = {"name": name}
        for slot, key in enumerate(("t_to_t-1", "t_to_t+1")):
            params = PoseParams.from_vector(p[slot])
            entry[key] = {
                "translation": [float(x) for x in params.translation],
                "euler_zyx": [float(x) for x in params.euler],
                "matrix": params.to_rigid().matrix().tolist(),
            }
        cams.append(entry)
    return {"cameras": cams}


def poses_from_json(doc: dict) -> np.ndarray:
    try:
        return np.array(
            [[c[k]["translation"] + c[k]["euler_zyx"] for k in ("t_to_t-1", "t_to_t+1")] for c in doc["cameras"]],
            dtype=np.float64,
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed pose document: {exc}") from exc


# ---------------------------------------------------------------------------
# sample directories


def save_sample(sample, out_dir) -> list[Path]:
    """Write a :class:`~surroundmono.synthetic.MultiCamSample`; returns the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(sample.n_cameras):
        cam_dir = out / f"cam{i}"
        cam_dir.mkdir(exist_ok=True)
        for k, name in enumerate(FRAME_NAMES):
            p = cam_dir / f"{name}.png"
            write_png(p, sample.images[i, k])
            written.append(p)
        p = cam_dir / "gt_depth.pfm"
        write_pfm(p, sample.gt_depth[i])
        written.append(p)
        p = cam_dir / "self_occ.png"
        write_mask(p, sample.self_occ[i])
        written.append(p)
    rig_to_json(sample.rig, out / "rig.json")
    write_json(
        out / "trajectory.json",
        {"rig_to_world": [x.matrix().tolist() for x in sample.trajectory], "frames": list(FRAME_NAMES), "metadata": sample.metadata},
    )
    return written + [out / "rig.json", out / "trajectory.json"]


def load_sample(sample_dir):
    """Read a sample directory back; pixels at the far plane are marked invalid for evaluation."""
    from surroundmono.synthetic import FAR_PLANE, MultiCamSample

    d = Path(sample_dir)
    if not d.is_dir():
        raise DataError(f"missing sample directory: {d}")
    rig_path = d / "rig.json"
    if not rig_path.is_file():
        raise DataError(f"missing file: {rig_path}")
    try:
        rig = rig_from_json(rig_path)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{rig_path}: {exc}") from exc
    traj_doc = read_json(d / "trajectory.json")
    try:
        traj = [RigidTransform.from_matrix(np.array(m, dtype=np.float64)) for m in traj_doc["rig_to_world"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{d / 'trajectory.json'}: {exc}") from exc
    images, depth, so = [], [], []
    for i, cam in enumerate(rig):
        cam_dir = d / f"cam{i}"
        frames = []
        for name in FRAME_NAMES:
            img = read_png(cam_dir / f"{name}.png")
            if img.ndim == 2:
                img = img[..., None]
            frames.append(img)
        gd = read_pfm(cam_dir / "gt_depth.pfm") if (cam_dir / "gt_depth.pfm").is_file() else np.full(cam.shape, np.nan)
        mask_path = cam_dir / "self_occ.png"
        m = read_mask(mask_path) if mask_path.is_file() else np.ones(cam.shape, dtype=bool)
        for what, a in (("image", frames[0]), ("gt_depth", gd), ("self_occ", m)):
            if a.shape[:2] != cam.shape:
                raise DataError(f"camera {cam.name or i}: {what} is {a.shape[1]}x{a.shape[0]}, rig says {cam.width}x{cam.height}")
        images.append(np.stack(frames))
        depth.append(gd)
        so.append(m)
    gt_depth = np.stack(depth)
    gt_valid = np.isfinite(gt_depth) & (gt_depth > 0) & (gt_depth < FAR_PLANE)
    gt_depth = np.where(np.isfinite(gt_depth), gt_depth, FAR_PLANE)
    return MultiCamSample(rig, np.stack(images), gt_depth, gt_valid, np.stack(so), traj, traj_doc.get("metadata", {}))


def save_depths(depths, out_dir, names=None) -> list[Path]:
    """One ``cam{i}/depth.pfm`` per camera."""
    out = Path(out_dir)
    written = []
    for i, dm in enumerate(depths):
        cam_dir = out / f"cam{i}"
        cam_dir.mkdir(parents=True, exist_ok=True)
        p = cam_dir / "depth.pfm"
        write_pfm(p, np.asarray(getattr(dm, "depth", dm)))
        written.append(p)
    return written


def load_depths(depth_dir, n_cameras: int | None = None, filename: str = "depth.pfm") -> list[np.ndarray]:
    """Read ``cam{i}/<filename>`` for ``i = 0, 1, ...`` (until missing, or exactly ``n_cameras``)."""
    d = Path(depth_dir)
    if not d.is_dir():
        raise DataError(f"missing directory: {d}")
    out = []
    i = 0
    while n_cameras is None or i < n_cameras:
        p = d / f"cam{i}" / filename
        if not p.is_file():
            if n_cameras is None and i > 0:
                break
            raise DataError(f"missing file: {p}")
        out.append(read_pfm(p))
        i += 1
    return out
