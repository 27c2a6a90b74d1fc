"""Command line entry point: ``surroundmono <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Set ``SURROUNDMONO_THREADS`` to cap the thread pools of numpy, numba and XLA.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("surroundmono")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    from surroundmono.io import DataError, save_sample
    from surroundmono.synthetic import make_sample, spec_from_json

    path = Path(args.spec)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    try:
        rig_spec, scene, occluder = spec_from_json(path.read_text())
    except (ValueError, TypeError, KeyError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    sample = make_sample(rig_spec, scene, occluder)
    files = save_sample(sample, args.out)
    print(f"wrote {len(files)} files for {sample.n_cameras} camera(s) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# optimize


def _run_config(args) -> dict:
    """Resolve CLI flags and an optional config file into one serializable run config."""
    from surroundmono.optimizer import PRESETS, OptimConfig, preset

    doc = {}
    if args.config:
        from surroundmono.io import read_json

        doc = read_json(args.config)
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
    name = args.preset or doc.get("preset", "fsm")
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    overrides = dict(doc.get("optim", {}))
    for key in ("steps", "seed", "lr"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    try:
        base_weights, cfg = preset(name)
        cfg = OptimConfig.from_dict({**cfg.to_dict(), **overrides})
        weights = base_weights.__class__(**{**asdict(base_weights), **doc.get("weights", {})})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return {"preset": name, "weights": asdict(weights), "optim": cfg.to_dict()}


def _trace_csv(trace, levels) -> str:
    from surroundmono.losses import LossBreakdown

    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "level"] + list(LossBreakdown.SCALAR_FIELDS))
    for k, (b, lev) in enumerate(zip(trace, levels), start=1):
        w.writerow([k, lev] + [repr(float(getattr(b, f))) for f in LossBreakdown.SCALAR_FIELDS])
    return buf.getvalue()


def cmd_optimize(args) -> int:
    from surroundmono.io import load_sample, poses_to_json, save_depths, write_json
    from surroundmono.losses import LossWeights
    from surroundmono.optimizer import OptimConfig, optimize

    run = _run_config(args)
    sample = load_sample(args.sample)
    weights = LossWeights(**run["weights"])
    config = OptimConfig.from_dict(run["optim"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = optimize(sample, weights, config)
    names = [c.name or f"cam{i}" for i, c in enumerate(sample.rig)]
    save_depths(result.depth, out, names)
    write_json(out / "poses.json", poses_to_json(result.pose, names))
    (out / "trace.csv").write_text(_trace_csv(result.trace, result.trace_levels))
    write_json(out / "final_loss.json", result.final.to_dict())
    write_json(out / "config.json", run)
    print(f"preset {run['preset']}: {config.steps} steps, final loss {result.final.total:.6g}; outputs in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    from surroundmono.evaluation import evaluate_rig, metrics_csv
    from surroundmono.io import DataError, load_depths, load_sample, read_json

    gt = load_sample(args.gt)
    preds = load_depths(args.pred, gt.n_cameras)
    names = [c.name or f"cam{i}" for i, c in enumerate(gt.rig)]
    for name, p, g in zip(names, preds, gt.gt_depth):
        if p.shape != g.shape:
            raise DataError(f"camera {name}: prediction is {p.shape[1]}x{p.shape[0]}, ground truth {g.shape[1]}x{g.shape[0]}")
    rows, factors = evaluate_rig(preds, list(gt.gt_depth), list(gt.eval_mask()), args.protocol, names, args.cap)
    notes = []
    cfg_path = Path(args.pred) / "config.json"
    if cfg_path.is_file():
        run = read_json(cfg_path)
        optim = run.get("optim", {})
        if args.protocol == "none" and not optim.get("use_spatial", True) and not optim.get("use_spatiotemporal", True):
            notes.append(
                f"predictions come from preset {run.get('preset')!r} without cross-camera terms: "
                "their scale is arbitrary, so unscaled metrics mostly measure the scale error"
            )
    if args.json:
        doc = {
            "protocol": args.protocol,
            "cap": args.cap,
            "rows": [{"camera": n, "scale": (None if n == "Avg" else f), **m.as_dict()} for (n, m), f in zip(rows, factors + [None])],
            "notes": notes,
        }
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        text = metrics_csv(rows, args.protocol, factors) + "".join(f"# note: {n}\n" for n in notes)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# warp-debug


def _camera_index(rig, key: str) -> int:
    for i, c in enumerate(rig):
        if key == c.name or key == f"cam{i}" or key == str(i):
            return i
    raise UsageError(f"unknown camera {key!r}; rig has {', '.join(c.name or f'cam{i}' for i, c in enumerate(rig))}")


def _heatmap(loss: np.ndarray, mask: np.ndarray, vmax: float) -> np.ndarray:
    """Black (0) to white (``vmax``) with a warm tint; masked-out pixels are blue."""
    x = np.clip(loss / vmax, 0, 1)
    rgb = np.stack([x, x**2, x**4], axis=-1)
    rgb[~mask] = (0.0, 0.0, 0.35)
    return rgb


def cmd_warp_debug(args) -> int:
    from surroundmono.io import (
        load_depths,
        load_sample,
        poses_from_json,
        read_json,
        write_json,
        write_mask,
        write_pfm,
        write_png,
    )
    from surroundmono.losses import masked_photometric_loss, photometric_loss
    from surroundmono.warping import (
        BinaryMask,
        DepthField,
        ImagePlane,
        non_overlap_mask,
        synthesize,
        warp_spatial,
        warp_spatiotemporal,
        warp_mask,
        warp_temporal,
    )
    from surroundmono.differentiation import PoseParams

    sample = load_sample(args.sample)
    i = _camera_index(sample.rig, args.cam_i)
    j = _camera_index(sample.rig, args.cam_j) if args.cam_j is not None else i
    slot = 0 if args.slot == "prev" else 1
    src_time = 0 if slot == 0 else 2
    depth = load_depths(args.depth, sample.n_cameras)[i] if args.depth else sample.gt_depth[i]
    if args.poses:
        ego = PoseParams.from_vector(poses_from_json(read_json(args.poses))[i, slot]).to_rigid()
    else:
        ego = sample.gt_ego(i, slot)
    cam_i, cam_j = sample.rig[i], sample.rig[j]
    d = DepthField.from_depth(depth)
    target = ImagePlane(sample.images[i, 1])
    so_i = BinaryMask(sample.self_occ[i])
    contexts = ["temporal", "spatial", "spatiotemporal"] if args.context == "all" else [args.context]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"target": cam_i.name, "source": cam_j.name, "slot": args.slot, "contexts": {}}
    for ctx in contexts:
        if ctx == "temporal":
            warp, src_cam, src_img = warp_temporal(d, ego, cam_i), i, sample.images[i, src_time]
        elif ctx == "spatial":
            warp, src_cam, src_img = warp_spatial(d, cam_i, cam_j), j, sample.images[j, 1]
        else:
            warp, src_cam, src_img = warp_spatiotemporal(d, ego, cam_i, cam_j), j, sample.images[j, src_time]
        synth, _ = synthesize(ImagePlane(src_img), warp)
        no = non_overlap_mask(warp)
        keep = warp_mask(BinaryMask(sample.self_occ[src_cam]), warp) & so_i
        loss_map = photometric_loss(target, synth, no & keep)
        mean, count = masked_photometric_loss(loss_map, no, keep)
        write_png(out / f"{ctx}_synth.png", synth.data)
        write_png(out / f"{ctx}_loss.png", _heatmap(loss_map, (no & keep).bits, args.vmax))
        write_mask(out / f"{ctx}_mask.png", no)
        write_pfm(out / f"{ctx}_coords.pfm", np.dstack([warp.coords, warp.valid.astype(np.float64)]))
        summary["contexts"][ctx] = {
            "source_camera": sample.rig[src_cam].name,
            "mean_loss": float(mean),
            "valid_pixels": int(count),
            "overlap_fraction": no.fraction(),
        }
        print(f"{ctx:>15}: mean loss {mean:.5f} over {count} px, overlap {no.fraction():.3f}")
    write_json(out / "summary.json", summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# export-ply


def cmd_export_ply(args) -> int:
    from surroundmono.evaluation import assemble_pointcloud, write_ply
    from surroundmono.geometry import rig_from_json
    from surroundmono.io import DataError, load_depths, read_mask, read_png

    rig_path = Path(args.rig)
    if rig_path.is_dir():
        rig_path = rig_path / "rig.json"
    if not rig_path.is_file():
        raise DataError(f"missing file: {rig_path}")
    rig = rig_from_json(rig_path)
    depths = load_depths(args.depth, len(rig), filename=args.depth_file)
    base = Path(args.images) if args.images else rig_path.parent
    images, masks = [], []
    for i, cam in enumerate(rig):
        img_path = base / f"cam{i}" / "t.png"
        images.append(read_png(img_path) if img_path.is_file() else np.full(cam.shape + (3,), 0.5))
        if args.masks:
            masks.append(read_mask(Path(args.masks) / f"cam{i}" / "self_occ.png"))
        else:
            masks.append(np.isfinite(depths[i]) & (depths[i] > 0) & (depths[i] < args.max_depth))
    cloud = assemble_pointcloud(depths, images, rig, masks)
    write_ply(cloud, args.out)
    print(f"wrote {len(cloud)} points to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# grad-check


def cmd_grad_check(args) -> int:
    from surroundmono.differentiation import grad_check
    from surroundmono.io import load_sample
    from surroundmono.optimizer import preset
    from surroundmono.synthetic import small_sample

    sample = load_sample(args.sample) if args.sample else small_sample(args.seed)
    weights, cfg = preset(args.preset)
    rng = np.random.default_rng(args.seed)
    log_depth = np.log(sample.gt_depth) + 0.05 * rng.standard_normal(sample.gt_depth.shape)
    pose = sample.gt_pose_params() + 0.01 * rng.standard_normal((sample.n_cameras, 2, 6))
    report = grad_check(sample, log_depth, pose, weights, cfg.toggles, n_coords=args.n_coords, seed=args.seed)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from surroundmono.evaluation import DEFAULT_CAP, PROTOCOLS
    from surroundmono.optimizer import PRESETS

    p = argparse.ArgumentParser(prog="surroundmono", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic sample from a JSON spec")
    s.add_argument("spec", help="JSON with optional 'rig', 'scene' or 'seed', 'occluder'")
    s.add_argument("out", help="output sample directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("optimize", help="optimize depth and ego-motion for one sample")
    s.add_argument("sample", help="sample directory")
    s.add_argument("out", help="output directory")
    s.add_argument("--config", help="run config JSON (as archived by a previous run)")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--lr", type=float)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("eval", help="depth metrics of predictions against a sample's ground truth")
    s.add_argument("pred", help="directory with cam{i}/depth.pfm")
    s.add_argument("gt", help="sample directory")
    s.add_argument("--protocol", choices=PROTOCOLS, default="shared")
    s.add_argument("--cap", type=float, default=DEFAULT_CAP)
    s.add_argument("--json", action="store_true", help="machine-readable output")
    s.add_argument("--out", help="also write the output to this file")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("warp-debug", help="synthesized views, loss heatmaps and masks for one camera pair")
    s.add_argument("sample", help="sample directory")
    s.add_argument("--cam-i", required=True, help="target camera (name or index)")
    s.add_argument("--cam-j", help="source camera for spatial contexts (default: the target)")
    s.add_argument("--context", choices=["temporal", "spatial", "spatiotemporal", "all"], default="all")
    s.add_argument("--slot", choices=["prev", "next"], default="next", help="adjacent frame for temporal contexts")
    s.add_argument("--depth", help="directory with cam{i}/depth.pfm (default: ground truth)")
    s.add_argument("--poses", help="poses.json from optimize (default: ground-truth ego-motion)")
    s.add_argument("--vmax", type=float, default=0.2, help="loss mapped to white")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_warp_debug)

    s = sub.add_parser("export-ply", help="lift depth maps into one rig-frame pointcloud")
    s.add_argument("depth", help="directory with cam{i}/<depth-file>")
    s.add_argument("rig", help="rig.json or a sample directory")
    s.add_argument("out", help="output .ply")
    s.add_argument("--depth-file", default="depth.pfm", help="file name inside each cam{i} (gt_depth.pfm for ground truth)")
    s.add_argument("--images", help="sample directory to colour points from (default: next to rig.json)")
    s.add_argument("--masks", help="directory with cam{i}/self_occ.png; only kept pixels are exported")
    s.add_argument("--max-depth", type=float, default=DEFAULT_CAP, help="drop pixels at or beyond this depth")
    s.set_defaults(func=cmd_export_ply)

    s = sub.add_parser("grad-check", help="compare analytic and finite-difference gradients")
    s.add_argument("--sample", help="sample directory (default: a small built-in 3-camera sample)")
    s.add_argument("--preset", choices=sorted(PRESETS), default="fsm")
    s.add_argument("--n-coords", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    from surroundmono.io import DataError
    from surroundmono.optimizer import NumericalFailure

    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
