import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bilinear_loop, mat4, warp_point
from surroundmono.geometry import CameraModel, RigidTransform, compose, relative_extrinsics
from surroundmono.synthetic import RigSpec, analytic_overlap_fraction, build_rig
from surroundmono.warping import (
    BinaryMask,
    DepthField,
    ImagePlane,
    WarpField,
    non_overlap_mask,
    synthesize,
    warp_mask,
    warp_spatial,
    warp_spatiotemporal,
    warp_temporal,
)

H, W = 12, 16
CAM = CameraModel(14.0, 14.0, 7.5, 5.5, W, H, name="c")


def rand_depth(seed=0, lo=2.0, hi=30.0, shape=(H, W)):
    return DepthField.from_depth(np.random.default_rng(seed).uniform(lo, hi, shape))


def rand_image(seed=0, shape=(H, W, 3)):
    return ImagePlane(np.random.default_rng(seed).uniform(0, 1, shape))


def rand_ego(seed=0, scale=0.2):
    r = np.random.default_rng(seed)
    return RigidTransform.from_euler(r.normal(0, scale, 3), r.normal(0, scale / 4, 3))


def pixel_grid(h=H, w=W):
    v, u = np.mgrid[0:h, 0:w].astype(float)
    return np.stack([u, v], -1)


# -- temporal ---------------------------------------------------------------


def test_identity_warp_maps_pixels_to_themselves():
    w = warp_temporal(rand_depth(), RigidTransform.identity(), CAM)
    np.testing.assert_array_equal(w.coords, pixel_grid())
    assert w.valid.all()


def test_identity_warp_reproduces_source():
    img = rand_image(3)
    synth, mask = synthesize(img, warp_temporal(rand_depth(), RigidTransform.identity(), CAM))
    assert np.abs(synth.data - img.data).max() <= 1e-7
    assert mask.bits.all()


def test_forward_translation_on_plane_closed_form():
    d, delta = 10.0, 2.0
    w = warp_temporal(DepthField.from_depth(np.full((H, W), d)), RigidTransform(np.eye(3), [0, 0, -delta]), CAM)
    k = d / (d - delta)
    for u, v in [(7.5, 5.5), (0, 0), (13, 9)]:
        if u == 7.5:
            continue
        expect = (CAM.cx + (u - CAM.cx) * k, CAM.cy + (v - CAM.cy) * k)
        got = w.coords[int(v), int(u)]
        np.testing.assert_allclose(got, expect, atol=1e-9)
    # a camera whose principal point is a pixel centre keeps that pixel fixed
    c = CameraModel(14.0, 14.0, 7.0, 5.0, W, H)
    w = warp_temporal(DepthField.from_depth(np.full((H, W), d)), RigidTransform(np.eye(3), [0, 0, -delta]), c)
    np.testing.assert_allclose(w.coords[5, 7], [7.0, 5.0], atol=1e-12)


def test_ego_pushing_points_behind_invalidates_all():
    w = warp_temporal(DepthField.from_depth(np.full((H, W), 5.0)), RigidTransform(np.eye(3), [0, 0, -10.0]), CAM)
    assert not w.valid.any()
    synth, mask = synthesize(rand_image(), w)
    assert not synth.data.any() and not mask.bits.any()
    assert not non_overlap_mask(w).bits.any()


@given(st.floats(0.01, 100.0), st.integers(0, 50))
def test_temporal_warp_scale_ambiguity(s, seed):
    depth = rand_depth(seed)
    ego = rand_ego(seed)
    a = warp_temporal(depth, ego, CAM)
    b = warp_temporal(depth.scaled(s), RigidTransform(ego.rotation, s * ego.translation), CAM)
    both = a.valid & b.valid
    assert np.abs(a.coords - b.coords)[both].max(initial=0) < 1e-9
    # validity differs at most on pixels sitting on the image border within rounding
    assert (a.valid != b.valid).sum() <= 2


# -- spatial ---------------------------------------------------------------


def test_spatial_same_camera_is_identity():
    w = warp_spatial(rand_depth(), CAM, CAM)
    np.testing.assert_array_equal(w.coords, pixel_grid())
    assert w.valid.all()


def test_opposite_cameras_share_nothing():
    rig = build_rig(RigSpec(n_cameras=2, width=W, height=H))
    w = warp_spatial(rand_depth(), rig[0], rig[1])
    assert not w.valid.any()
    assert not non_overlap_mask(w).bits.any()


def test_spatial_overlap_matches_frustum_oracle():
    # co-located cameras, 50 deg field of view, 45 deg apart, far plane
    spec = RigSpec(n_cameras=2, width=200, height=20, hfov_deg=50.0, radial_offset=0.0, yaw_deg=(0.0, 45.0), cy_fraction=0.5)
    rig = build_rig(spec)
    far = DepthField.from_depth(np.full(rig[0].shape, 1e5))
    frac = non_overlap_mask(warp_spatial(far, rig[0], rig[1])).fraction()
    expect = analytic_overlap_fraction(50.0, 45.0)
    assert abs(frac - expect) < 0.02
    assert 0.10 <= frac <= 0.20


def test_standard_rig_overlap_against_oracle():
    spec = RigSpec(radial_offset=0.0, cy_fraction=0.5)
    rig = build_rig(spec)
    far = DepthField.from_depth(np.full(rig[0].shape, 1e5))
    frac = warp_spatial(far, rig[0], rig[1]).valid.mean()
    assert abs(frac - analytic_overlap_fraction(spec.hfov_deg, 60.0)) < 0.02


# -- spatio-temporal ---------------------------------------------------------


def rig_pair(seed=0):
    rig = build_rig(RigSpec(n_cameras=6, width=W, height=H, hfov_deg=90.0))
    return rig[0], rig[1]


def test_spatiotemporal_reduces_to_spatial_exactly():
    ci, cj = rig_pair()
    d = rand_depth(1)
    a = warp_spatiotemporal(d, RigidTransform.identity(), ci, cj)
    b = warp_spatial(d, ci, cj)
    np.testing.assert_array_equal(a.coords, b.coords)
    np.testing.assert_array_equal(a.valid, b.valid)


def test_spatiotemporal_reduces_to_temporal_exactly():
    ci, _ = rig_pair()
    d, ego = rand_depth(2), rand_ego(2)
    a = warp_spatiotemporal(d, ego, ci, ci)
    b = warp_temporal(d, ego, ci)
    np.testing.assert_array_equal(a.coords, b.coords)
    np.testing.assert_array_equal(a.valid, b.valid)


@pytest.mark.parametrize("seed", range(5))
def test_spatiotemporal_matches_matrix_chain(seed):
    r = np.random.default_rng(seed)
    Xi = RigidTransform.from_euler(r.normal(0, 1, 3), r.normal(0, 0.3, 3))
    Xj = RigidTransform.from_euler(r.normal(0, 1, 3), Xi.translation * 0 + r.normal(0, 0.05, 3))
    ci = CameraModel(14.0, 15.0, 7.5, 5.5, W, H, Xi)
    cj = CameraModel(12.0, 13.0, 8.0, 5.0, W, H, Xj)
    ego = rand_ego(seed)
    d = rand_depth(seed)
    w = warp_spatiotemporal(d, ego, ci, cj)
    M = np.linalg.inv(Xj.matrix()) @ Xi.matrix() @ ego.matrix()
    for v in range(H):
        for u in range(W):
            x, y, z = warp_point(u, v, d.depth[v, u], ci.intrinsics, cj.intrinsics, M)
            if z > 1e-6:
                np.testing.assert_allclose(w.coords[v, u], [x, y], atol=1e-9)
                assert w.valid[v, u] == (0 <= x <= W - 1 and 0 <= y <= H - 1)
            else:
                assert not w.valid[v, u]


def test_spatiotemporal_uses_single_composed_transform():
    ci, cj = rig_pair()
    d, ego = rand_depth(4), rand_ego(4)
    a = warp_spatiotemporal(d, ego, ci, cj)
    chain = compose(relative_extrinsics(ci, cj), ego)
    M = mat4(chain.rotation, chain.translation)
    u, v = 3, 4
    x, y, _ = warp_point(u, v, d.depth[v, u], ci.intrinsics, cj.intrinsics, M)
    np.testing.assert_allclose(a.coords[v, u], [x, y], atol=1e-12)


# -- sampling and masks -------------------------------------------------------


def test_half_pixel_shift_on_linear_ramp():
    ramp = np.tile(np.arange(W, dtype=float) / (W - 1), (H, 1))
    coords = pixel_grid() + np.array([0.5, 0.0])
    valid = coords[..., 0] <= W - 1
    synth, mask = synthesize(ImagePlane(ramp), WarpField(coords, valid, (H, W)))
    expect = (np.arange(W) + 0.5) / (W - 1)
    np.testing.assert_allclose(synth.data[:, : W - 1, 0], np.tile(expect[: W - 1], (H, 1)), atol=1e-15)
    assert not mask.bits[:, W - 1].any()
    assert not synth.data[:, W - 1].any()


def test_all_invalid_warp_gives_zero_image():
    w = WarpField(pixel_grid(), np.zeros((H, W), bool), (H, W))
    synth, mask = synthesize(rand_image(), w)
    assert not synth.data.any() and mask.count() == 0


@pytest.mark.parametrize("seed", range(3))
def test_bilinear_matches_loop_oracle(seed):
    img = rand_image(seed, (9, 11, 3))
    r = np.random.default_rng(seed)
    coords = np.stack([r.uniform(0, 10, (H, W)), r.uniform(0, 8, (H, W))], -1)
    coords[0, :3] = [[0, 0], [10, 8], [4.0, 3.0]]  # corners and an exact lattice point
    synth, _ = synthesize(img, WarpField(coords, np.ones((H, W), bool), (9, 11)))
    for v in range(H):
        for u in range(W):
            np.testing.assert_allclose(synth.data[v, u], bilinear_loop(img.data, *coords[v, u]), atol=1e-14)


@given(st.integers(0, 200))
def test_valid_pixels_never_extrapolate(seed):
    ci, cj = rig_pair()
    w = warp_spatiotemporal(rand_depth(seed, 0.5, 50), rand_ego(seed, 0.5), ci, cj)
    u, v = w.coords[..., 0][w.valid], w.coords[..., 1][w.valid]
    x0 = np.clip(np.ceil(u) - 1, 0, W - 2)
    y0 = np.clip(np.ceil(v) - 1, 0, H - 2)
    assert ((u - x0 >= 0) & (u - x0 <= 1) & (v - y0 >= 0) & (v - y0 <= 1)).all()
    synth, _ = synthesize(rand_image(seed), w)
    assert synth.data.min() >= 0 and synth.data.max() <= 1


def test_non_overlap_identity_is_all_ones():
    assert non_overlap_mask(warp_temporal(rand_depth(), RigidTransform.identity(), CAM)).bits.all()


def test_warp_mask_pulls_source_mask():
    m = np.ones((H, W), bool)
    m[:, :4] = False
    shift = WarpField(pixel_grid() + np.array([2.0, 0.0]), np.ones((H, W), bool), (H, W))
    pulled = warp_mask(BinaryMask(m), shift).bits
    # target column x reads source column x + 2
    assert not pulled[:, :2].any() and pulled[:, 2 : W - 2].all()
    assert not pulled[:, W - 2 :].any()


def test_mask_algebra():
    a = BinaryMask(np.eye(4, dtype=bool))
    ones = BinaryMask.ones(4, 4)
    np.testing.assert_array_equal((a & ones).bits, a.bits)
    assert (a | ones).bits.all()
    assert a.count() == 4 and a.fraction() == 0.25


def test_value_types_validate():
    with pytest.raises(ValueError):
        ImagePlane(np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        DepthField.from_depth(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        warp_temporal(rand_depth(shape=(3, 3)), RigidTransform.identity(), CAM)
    with pytest.raises(ValueError):
        synthesize(rand_image(shape=(3, 3, 1)), warp_temporal(rand_depth(), RigidTransform.identity(), CAM))
