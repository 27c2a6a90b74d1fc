import numpy as np
import pytest

from conftest import shifted_plane_sample
from surroundmono._kernels import photometric_fwd_bwd
from surroundmono.differentiation import (
    GradCheckReport,
    PoseParams,
    finite_difference,
    grad_check,
    gradients,
    random_coords,
)
from surroundmono.geometry import RigidTransform
from surroundmono.losses import LossWeights, Objective, Toggles
from surroundmono.synthetic import MultiCamSample


def perturbed(sample, seed=0, d_sigma=0.1, p_sigma=0.01):
    rng = np.random.default_rng(seed)
    ld = sample.gt_log_depth() + d_sigma * rng.standard_normal(sample.gt_depth.shape)
    pose = sample.gt_pose_params() + p_sigma * rng.standard_normal((sample.n_cameras, 2, 6))
    return ld, pose


def test_pose_params_round_trip():
    p = PoseParams((0.1, -0.2, 0.3), (0.05, -0.1, 0.2))
    np.testing.assert_allclose(PoseParams.from_rigid(p.to_rigid()).as_vector(), p.as_vector(), atol=1e-12)
    R = p.to_rigid().rotation
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
    assert abs(np.linalg.det(R) - 1) < 1e-9
    np.testing.assert_array_equal(PoseParams.from_vector(p.as_vector()).as_vector(), p.as_vector())


@pytest.mark.parametrize("toggles", [Toggles(), Toggles(use_spatial=False, use_spatiotemporal=False, use_pcc=False)])
def test_grad_check_small_sample(tiny_sample, toggles):
    ld, pose = perturbed(tiny_sample)
    rep = grad_check(tiny_sample, ld, pose, LossWeights(lambda_d=0.01), toggles, n_coords=60, seed=3)
    assert rep.ok, rep.summary()
    assert len(rep.coords) == 60


def test_rotation_gradient_is_not_skipped_for_translation_only_pose(tiny_sample):
    one = MultiCamSample(
        [tiny_sample.rig[0]],
        tiny_sample.images[:1],
        tiny_sample.gt_depth[:1],
        tiny_sample.gt_valid[:1],
        tiny_sample.self_occ[:1],
        tiny_sample.trajectory,
    )
    w = LossWeights(lambda_s=0.0, lambda_d=0.0)
    ld = one.gt_log_depth()
    pose = np.zeros((1, 2, 6))
    pose[0, :, :3] = one.gt_pose_params()[0, :, :3] + 0.02
    coords = [("pose", (0, s, k)) for s in (0, 1) for k in (3, 4, 5)]
    rep = grad_check(one, ld, pose, w, coords=coords)
    assert rep.ok, rep.summary()
    assert np.abs(rep.analytic).max() > 1e-3


def test_gradient_vanishes_at_exact_minimum():
    s = shifted_plane_sample()
    g = gradients(s, s.gt_log_depth(), s.gt_pose_params())
    assert g.is_finite()
    assert g.max_abs() < 1e-4
    assert abs(g.loss_value) < 1e-12


def test_directional_derivative_matches_first_order_expansion(tiny_sample):
    ld, pose = perturbed(tiny_sample, 1)
    obj = Objective(tiny_sample)
    masks = obj.masks(ld, pose)
    f0, g_d, g_p, _ = obj.value_and_grad(ld, pose, masks)
    rng = np.random.default_rng(2)
    vd = rng.standard_normal(ld.shape)
    vp = rng.standard_normal(pose.shape) * 0.1
    slope = float((g_d * vd).sum() + (g_p * vp).sum())
    rem = []
    eps_list = (1e-3, 1e-4, 1e-5)
    for eps in eps_list:
        f = obj.value(ld + eps * vd, pose + eps * vp, masks)
        rem.append(abs(f - f0 - eps * slope) / eps)
    # the first-order error shrinks with eps and is tiny next to the slope
    assert rem[0] > rem[1] > rem[2]
    assert rem[2] < 1e-3 * abs(slope)


def test_masks_are_constants_inside_one_evaluation(tiny_sample):
    ld, pose = perturbed(tiny_sample, 2)
    obj = Objective(tiny_sample)
    masks = obj.masks(ld, pose)
    frozen = masks.copy()
    coords = random_coords(ld.shape, pose.shape, 20, np.random.default_rng(0))
    finite_difference(obj, ld, pose, masks, coords, h_depth=0.5, h_pose=0.5)
    np.testing.assert_array_equal(masks, frozen)
    # a large step changes the recomputed masks but not the frozen ones
    assert (obj.masks(ld + 0.5, pose) != frozen).any()


def test_gradients_bundle(tiny_sample):
    ld, pose = perturbed(tiny_sample)
    g = gradients(tiny_sample, ld, pose)
    assert g.d_log_depth.shape == ld.shape and g.d_pose.shape == pose.shape
    assert g.is_finite()
    assert g.breakdown.total == pytest.approx(g.loss_value, rel=1e-14)


def test_random_coords_mix():
    c = random_coords((3, 4, 5), (3, 2, 6), 50, np.random.default_rng(0))
    kinds = [k for k, _ in c]
    assert kinds.count("pose") == 15 and kinds.count("depth") == 35


def test_report_tolerances():
    rep = GradCheckReport([("depth", (0,)), ("depth", (1,))], np.array([1.0, 1e-8]), np.array([1.0005, 5e-7]), 1e-3, 1e-6)
    assert rep.ok
    rep = GradCheckReport([("depth", (0,))], np.array([1.0]), np.array([1.01]), 1e-3, 1e-6)
    assert not rep.ok and "FAIL" in rep.summary()


# -- fused kernel against the reference graph ------------------------------------


@pytest.mark.parametrize("toggles", [Toggles(), Toggles(use_spatiotemporal=False), Toggles(use_self_occ_masks=False)])
def test_fused_route_matches_reference(std_sample, toggles):
    ld, pose = perturbed(std_sample, 4)
    obj = Objective(std_sample, LossWeights(lambda_d=0.01), toggles)
    v, g_d, g_p, parts = obj.value_and_grad(ld, pose)
    v2, g_d2, g_p2, parts2, masks = obj.fused_value_and_grad(ld, pose)
    np.testing.assert_array_equal(masks, obj.masks(ld, pose))
    assert v2 == pytest.approx(v, rel=1e-12)
    scale = np.abs(g_d).max()
    assert np.abs(g_d2 - g_d).max() <= 1e-10 * scale
    assert np.abs(g_p2 - g_p).max() <= 1e-10 * np.abs(g_p).max()
    np.testing.assert_allclose(parts2["pair_means"], np.asarray(parts["pair_means"]), rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(parts2["counts"], np.asarray(parts["counts"]))


def test_fused_kernel_matches_reference_at_exact_ties():
    s = shifted_plane_sample()
    obj = Objective(s)
    ld, pose = s.gt_log_depth(), s.gt_pose_params()
    _, g_d, g_p, _ = obj.value_and_grad(ld, pose)
    _, g_d2, g_p2, _, _ = obj.fused_value_and_grad(ld, pose)
    assert np.abs(g_d - g_d2).max() < 1e-15 and np.abs(g_p - g_p2).max() < 1e-15


def test_fused_kernel_coordinate_gradient_by_differences():
    rng = np.random.default_rng(0)
    P, Hh, Ww, C = 2, 7, 9, 3
    tgt = rng.uniform(size=(P, Hh, Ww, C))
    src = rng.uniform(size=(P, Hh, Ww, C))
    v0, u0 = np.mgrid[0:Hh, 0:Ww].astype(float)
    u = np.clip(u0 + rng.uniform(-0.7, 0.7, (P, Hh, Ww)), 0, Ww - 1)
    v = np.clip(v0 + rng.uniform(-0.7, 0.7, (P, Hh, Ww)), 0, Hh - 1)
    mask = rng.uniform(size=(P, Hh, Ww)) > 0.2
    w = np.array([0.7, 0.3])
    _, _, du, dv = photometric_fwd_bwd(tgt, src, u, v, mask, 0.85, w, True)
    h = 1e-6
    for p, y, x in [(0, 3, 4), (1, 2, 2), (0, 5, 7), (1, 6, 1)]:
        if not mask[p, y, x] or min(u[p, y, x] % 1, 1 - u[p, y, x] % 1) < 1e-3:
            continue
        up, um = u.copy(), u.copy()
        up[p, y, x] += h
        um[p, y, x] -= h
        fp = w @ photometric_fwd_bwd(tgt, src, up, v, mask, 0.85, w, False)[0]
        fm = w @ photometric_fwd_bwd(tgt, src, um, v, mask, 0.85, w, False)[0]
        assert du[p, y, x] == pytest.approx((fp - fm) / (2 * h), rel=1e-5, abs=1e-9)
