import json

import numpy as np
import pytest

from oracles import read_ply
from surroundmono.cli import main
from surroundmono.io import read_mask, read_pfm, save_depths


def _write_spec(path, **rig):
    path.write_text(json.dumps({"seed": 0, "rig": rig}))
    return path


@pytest.fixture(scope="module")
def std_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("std")
    assert main(["synth", str(_write_spec(base / "spec.json")), str(base / "sample")]) == 0
    return base / "sample"


@pytest.fixture(scope="module")
def small_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("small")
    spec = _write_spec(base / "spec.json", n_cameras=3, width=16, height=12, yaw_deg=[0, 60, -60])
    assert main(["synth", str(spec), str(base / "sample")]) == 0
    return base / "sample"


def _files(d):
    return sorted(p.relative_to(d).as_posix() for p in d.rglob("*") if p.is_file())


def test_synth_layout(std_dir):
    files = _files(std_dir)
    assert len(files) == 32
    assert sum(f.endswith(".png") and not f.endswith("self_occ.png") for f in files) == 18
    assert sum(f.endswith(".pfm") for f in files) == 6
    assert sum(f.endswith("self_occ.png") for f in files) == 6
    assert "rig.json" in files and "trajectory.json" in files


def test_synth_is_byte_identical(tmp_path, small_dir):
    spec = _write_spec(tmp_path / "spec.json", n_cameras=3, width=16, height=12, yaw_deg=[0, 60, -60])
    assert main(["synth", str(spec), str(tmp_path / "again")]) == 0
    for f in _files(small_dir):
        assert (small_dir / f).read_bytes() == (tmp_path / "again" / f).read_bytes(), f


def test_synth_single_camera(tmp_path):
    spec = _write_spec(tmp_path / "spec.json", n_cameras=1, width=16, height=12)
    assert main(["synth", str(spec), str(tmp_path / "one")]) == 0
    assert _files(tmp_path / "one") == [
        "cam0/gt_depth.pfm", "cam0/self_occ.png", "cam0/t+1.png", "cam0/t-1.png", "cam0/t.png", "rig.json", "trajectory.json",
    ]


def test_synth_malformed_spec_names_field(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"rig": {"n_camras": 3}}))
    assert main(["synth", str(tmp_path / "bad.json"), str(tmp_path / "x")]) != 0
    assert "n_camras" in capsys.readouterr().err
    assert main(["synth", str(tmp_path / "missing.json"), str(tmp_path / "x")]) == 2


def test_optimize_zero_steps_outputs_init(tmp_path, small_dir):
    from surroundmono.io import load_sample
    from surroundmono.optimizer import OptimConfig, init_state

    out = tmp_path / "run"
    assert main(["optimize", str(small_dir), str(out), "--steps", "0", "--seed", "3"]) == 0
    init = init_state(load_sample(small_dir), OptimConfig(seed=3))
    for i in range(3):
        np.testing.assert_allclose(read_pfm(out / f"cam{i}" / "depth.pfm"), init.depth[i], rtol=1e-7)
    poses = json.loads((out / "poses.json").read_text())
    assert all(c["t_to_t+1"]["translation"] == [0.0, 0.0, 0.0] for c in poses["cameras"])
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["preset"] == "fsm" and cfg["optim"]["steps"] == 0 and cfg["optim"]["seed"] == 3
    assert (out / "trace.csv").read_text().startswith("step,level,")


def test_optimize_archived_config_reproduces_bytes(tmp_path, small_dir):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["optimize", str(small_dir), str(a), "--steps", "6", "--preset", "fsm-no-stc"]) == 0
    assert main(["optimize", str(small_dir), str(b), "--config", str(a / "config.json")]) == 0
    assert _files(a) == _files(b)
    for f in _files(a):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    assert len((a / "trace.csv").read_text().strip().split("\n")) == 7


def test_optimize_missing_sample(tmp_path, capsys):
    assert main(["optimize", str(tmp_path / "nope"), str(tmp_path / "o")]) == 2
    assert "nope" in capsys.readouterr().err


def test_optimize_bad_config_is_usage_error(tmp_path, small_dir):
    (tmp_path / "c.json").write_text(json.dumps({"optim": {"lr": -1}}))
    assert main(["optimize", str(small_dir), str(tmp_path / "o"), "--config", str(tmp_path / "c.json")]) == 1
    assert main(["optimize", str(small_dir), str(tmp_path / "o"), "--preset", "bogus"]) == 1


def test_eval_perfect_prediction(tmp_path, small_dir, capsys):
    save_depths([read_pfm(small_dir / f"cam{i}" / "gt_depth.pfm") for i in range(3)], tmp_path / "pred")
    assert main(["eval", str(tmp_path / "pred"), str(small_dir), "--protocol", "none", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["protocol"] == "none" and [r["camera"] for r in doc["rows"]][-1] == "Avg"
    for r in doc["rows"]:
        assert r["abs_rel"] == 0.0 and r["rmse"] == 0.0 and r["delta_125"] == 1.0


def test_eval_shared_vs_per_frame(tmp_path, small_dir, capsys):
    gts = [read_pfm(small_dir / f"cam{i}" / "gt_depth.pfm") for i in range(3)]
    save_depths([gts[0] * 2.0, gts[1], gts[2]], tmp_path / "pred")
    out = {}
    for proto in ("per-frame", "shared"):
        assert main(["eval", str(tmp_path / "pred"), str(small_dir), "--protocol", proto, "--out", str(tmp_path / f"{proto}.csv")]) == 0
        last = (tmp_path / f"{proto}.csv").read_text().strip().split("\n")[-1].split(",")
        assert last[0] == "Avg" and last[1] == proto
        out[proto] = float(last[3])
    capsys.readouterr()
    assert out["shared"] >= out["per-frame"]
    assert out["shared"] > 0.1 and out["per-frame"] < 1e-6


def test_eval_flags_unscaled_mono(tmp_path, small_dir, capsys):
    assert main(["optimize", str(small_dir), str(tmp_path / "run"), "--preset", "mono", "--steps", "3"]) == 0
    capsys.readouterr()
    assert main(["eval", str(tmp_path / "run"), str(small_dir), "--protocol", "none"]) == 0
    text = capsys.readouterr().out
    assert "# note:" in text and "mono" in text
    assert float(text.split("\n")[4].split(",")[3]) > 0.2


def test_eval_dimension_mismatch_names_camera(tmp_path, small_dir, capsys):
    save_depths([np.ones((12, 16)), np.ones((6, 8)), np.ones((12, 16))], tmp_path / "pred")
    assert main(["eval", str(tmp_path / "pred"), str(small_dir)]) == 2
    assert "camera cam1" in capsys.readouterr().err


def test_warp_debug_outputs(tmp_path, std_dir):
    out = tmp_path / "wd"
    assert main(["warp-debug", str(std_dir), "--cam-i", "front", "--cam-j", "front_left", "--out", str(out)]) == 0
    for ctx in ("temporal", "spatial", "spatiotemporal"):
        for suffix in ("synth.png", "loss.png", "mask.png", "coords.pfm"):
            assert (out / f"{ctx}_{suffix}").is_file()
    coords = read_pfm(out / "temporal_coords.pfm")
    assert coords.shape == (64, 96, 3)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["contexts"]["temporal"]["mean_loss"] < 2e-2


def test_warp_debug_temporal_gt_is_dark(tmp_path, std_dir):
    for cam in ("front", "back_left", "back"):
        out = tmp_path / cam
        assert main(["warp-debug", str(std_dir), "--cam-i", cam, "--context", "temporal", "--out", str(out)]) == 0
        s = json.loads((out / "summary.json").read_text())
        assert s["contexts"]["temporal"]["mean_loss"] < 2e-2


def test_warp_debug_opposite_cameras_have_empty_mask(tmp_path, std_dir):
    out = tmp_path / "opp"
    assert main(["warp-debug", str(std_dir), "--cam-i", "front", "--cam-j", "back", "--context", "spatial", "--out", str(out)]) == 0
    assert not read_mask(out / "spatial_mask.png").any()


def test_warp_debug_stc_overlap_at_least_spatial(tmp_path, std_dir):
    fr = {}
    for slot in ("prev", "next"):
        out = tmp_path / slot
        args = ["warp-debug", str(std_dir), "--cam-i", "front", "--cam-j", "front_right", "--slot", slot, "--out", str(out)]
        assert main(args) == 0
        ctxs = json.loads((out / "summary.json").read_text())["contexts"]
        fr[slot] = ctxs["spatiotemporal"]["overlap_fraction"]
        fr["spatial"] = ctxs["spatial"]["overlap_fraction"]
        assert read_mask(out / "spatial_mask.png").mean() == pytest.approx(fr["spatial"])
    assert fr["spatial"] > 0
    assert max(fr["prev"], fr["next"]) >= fr["spatial"]


def test_warp_debug_unknown_camera(tmp_path, std_dir, capsys):
    assert main(["warp-debug", str(std_dir), "--cam-i", "roof", "--out", str(tmp_path / "x")]) == 1
    assert "roof" in capsys.readouterr().err


def test_export_ply_vertex_count(tmp_path, small_dir):
    out = tmp_path / "gt.ply"
    assert main(["export-ply", str(small_dir), str(small_dir), str(out), "--depth-file", "gt_depth.pfm"]) == 0
    names, rows, trailing = read_ply(out)
    depths = [read_pfm(small_dir / f"cam{i}" / "gt_depth.pfm") for i in range(3)]
    assert len(rows) == sum(int(((d > 0) & (d < 200)).sum()) for d in depths)
    assert trailing == b"" and names[:3] == ["x", "y", "z"]


def test_export_ply_empty_masks(tmp_path, small_dir):
    from surroundmono.io import write_mask

    for i in range(3):
        (tmp_path / "m" / f"cam{i}").mkdir(parents=True)
        write_mask(tmp_path / "m" / f"cam{i}" / "self_occ.png", np.zeros((12, 16), bool))
    out = tmp_path / "e.ply"
    args = ["export-ply", str(small_dir), str(small_dir), str(out), "--depth-file", "gt_depth.pfm", "--masks", str(tmp_path / "m")]
    assert main(args) == 0
    text = out.read_bytes()
    assert b"element vertex 0\n" in text and text.endswith(b"end_header\n")


def test_export_ply_missing_rig(tmp_path):
    assert main(["export-ply", str(tmp_path), str(tmp_path / "nope.json"), str(tmp_path / "o.ply")]) == 2


def test_grad_check_command(capsys):
    assert main(["grad-check", "--n-coords", "50"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_usage_errors():
    assert main([]) == 1
    assert main(["synth"]) == 1
    assert main(["--help"]) == 0
