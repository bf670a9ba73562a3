import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liquidwarp.body_model import SYNTH_CAMERA, BodyParams, CameraWP, project, skin
from liquidwarp.flow import (compose_flow, identity_flow, imitation_flow, mask_decompose,
                             novelview_flow, swap_flows)
from liquidwarp.rasterizer import RenderMaps, face_tris, pixel_centers, rasterize
from oracles import brute_force_raster, rot_y


def render(model, params, H, W):
    ft = face_tris(project(skin(model, params.theta, params.beta), params.camera), model.faces)
    return rasterize(ft, H, W), ft


def test_identity_flow_grid():
    tf = identity_flow(4, 6)
    assert tf.valid.all()
    assert np.array_equal(tf.flow, pixel_centers(4, 6))


def test_self_flow_is_pixel_grid(fine_model):
    p = BodyParams([0.1, 0.3, 0.0, 0.4, 0.2, -0.3], [0.2], CameraWP(0.6, 0.05, -0.1))
    maps, ft = render(fine_model, p, 64, 48)
    tf = compose_flow(maps, ft, maps)
    assert np.array_equal(tf.valid, maps.silhouette)
    assert np.abs(tf.flow[tf.valid] - pixel_centers(64, 48)[tf.valid]).max() < 1e-4
    assert np.all(tf.flow[~tf.valid] == 0)


def test_empty_target_gives_no_valid_pixels(model, rest_params):
    maps, ft = render(model, rest_params, 16, 16)
    empty = RenderMaps(np.full((16, 16), -1, np.int32), np.zeros((16, 16, 3)),
                       np.zeros((16, 16), bool), np.full((16, 16), np.inf))
    tf = compose_flow(maps, ft, empty)
    assert not tf.valid.any()
    assert np.all(tf.flow == 0)


def test_shape_mismatch_raises(model, rest_params):
    a, ft = render(model, rest_params, 16, 16)
    b, _ = render(model, rest_params, 16, 17)
    with pytest.raises(ValueError):
        compose_flow(a, ft, b)


def test_flow_reprojects_surface_points(fine_model):
    src = BodyParams(np.zeros(6), [0.0], SYNTH_CAMERA)
    tgt = BodyParams([0, 0, 0, 0, 0, 0.6], [0.0], SYNTH_CAMERA)
    src_maps, src_ft = render(fine_model, src, 48, 48)
    tgt_maps, tgt_ft = render(fine_model, tgt, 48, 48)
    tf = compose_flow(src_maps, src_ft, tgt_maps)

    # oracle: target coverage from the exact rasterizer, then the 3D surface point
    # on the source mesh re-projected through the source camera
    corr, bary, _ = brute_force_raster(tgt_ft.tris, tgt_ft.tri_depth, 48, 48)
    src_verts = skin(fine_model, src.theta, src.beta).vertices
    visible = set(np.unique(src_maps.corr[src_maps.corr >= 0]).tolist())
    cam = src.camera
    checked = 0
    for i, j in zip(*np.nonzero(corr >= 0)):
        f = corr[i, j]
        if f not in visible:
            assert not tf.valid[i, j]
            continue
        point = bary[i, j] @ src_verts[fine_model.faces[f]]
        expected = [cam.scale * (point[0] + cam.tx), cam.scale * (point[1] + cam.ty)]
        assert tf.valid[i, j]
        assert np.abs(tf.flow[i, j] - expected).max() < 1e-4
        checked += 1
    assert checked > 100


def test_occlusion_monotonicity(fine_model):
    src = BodyParams([0.2, 0.0, 0.0, 0.5, 0.0, 0.0], [0.0], SYNTH_CAMERA)
    tgt = BodyParams(np.zeros(6), [0.0], SYNTH_CAMERA)
    src_maps, ft = render(fine_model, src, 48, 48)
    tgt_maps, _ = render(fine_model, tgt, 48, 48)
    base = compose_flow(src_maps, ft, tgt_maps)
    rng = np.random.default_rng(5)
    vis = np.bincount(src_maps.corr[src_maps.corr >= 0], minlength=fine_model.n_faces) > 0
    prev = base.valid.sum()
    for _ in range(5):
        vis = vis & (rng.random(vis.shape) > 0.2)
        cur = compose_flow(src_maps, ft, tgt_maps, visible=vis).valid.sum()
        assert cur <= prev
        prev = cur


def test_validity_within_target_foreground(fine_model):
    src = BodyParams([0.1, 0.2, 0.3, 0.2, 0.1, 0.9], [0.3], SYNTH_CAMERA)
    bundle = imitation_flow(fine_model, src, [0, 0, 0, 0, 0, -0.5], 40, 40)
    assert not (bundle.flows[0].valid & (bundle.tgt_maps.corr < 0)).any()


def test_imitation_same_pose_is_identity(fine_model):
    src = BodyParams([0.0, 0.2, 0.0, 0.3, 0.0, 0.2], [0.1], SYNTH_CAMERA)
    bundle = imitation_flow(fine_model, src, src.theta, 40, 40)
    tf = bundle.flows[0]
    assert tf.valid.sum() > 0
    assert np.array_equal(tf.valid, bundle.src_maps[0].silhouette)
    assert np.abs(tf.flow[tf.valid] - pixel_centers(40, 40)[tf.valid]).max() < 1e-4


def test_imitation_rejects_bad_pose(model, rest_params):
    with pytest.raises(ValueError):
        imitation_flow(model, rest_params, np.zeros(5), 16, 16)


def _bbox_ratio(sil):
    rows = np.flatnonzero(sil.any(axis=1))
    cols = np.flatnonzero(sil.any(axis=0))
    return (rows[-1] - rows[0] + 1) / (cols[-1] - cols[0] + 1)


def test_imitation_keeps_source_shape(fine_model):
    src = BodyParams(np.zeros(6), [0.3], CameraWP(0.55))
    ref_theta = np.array([0.0, 0.25, 0.0, 0.0, 0.35, 0.0])
    bundle = imitation_flow(fine_model, src, ref_theta, 128, 128)
    ref_maps, _ = render(fine_model, BodyParams(ref_theta, [-0.3], CameraWP(0.55)), 128, 128)
    tgt = _bbox_ratio(bundle.tgt_maps.silhouette)
    assert abs(tgt / _bbox_ratio(bundle.src_maps[0].silhouette) - 1) < 0.05
    assert abs(tgt / _bbox_ratio(ref_maps.silhouette) - 1) > 0.05


def test_novelview_identity(fine_model):
    src = BodyParams([0.1, 0.0, 0.0, 0.2, 0.0, 0.0], [0.0], SYNTH_CAMERA)
    b = novelview_flow(fine_model, src, np.eye(3), np.zeros(3), 40, 40)
    tf = b.flows[0]
    assert np.array_equal(tf.valid, b.src_maps[0].silhouette)
    assert np.abs(tf.flow[tf.valid] - pixel_centers(40, 40)[tf.valid]).max() < 1e-4


def test_novelview_full_turn_equals_identity(fine_model):
    src = BodyParams([0.1, 0.0, 0.0, 0.2, 0.0, 0.0], [0.0], SYNTH_CAMERA)
    a = novelview_flow(fine_model, src, np.eye(3), np.zeros(3), 40, 40).flows[0]
    b = novelview_flow(fine_model, src, rot_y(2 * np.pi), np.zeros(3), 40, 40).flows[0]
    assert np.array_equal(a.valid, b.valid)
    assert np.abs(a.flow - b.flow).max() < 1e-5


def test_novelview_valid_fraction_matches_oracle(fine_model):
    src = BodyParams([0.0, 0.0, 0.0, 0.4, 0.0, 0.3], [0.0], SYNTH_CAMERA)
    R = rot_y(np.pi / 6)
    b = novelview_flow(fine_model, src, R, np.zeros(3), 48, 48)
    src_v = skin(fine_model, src.theta, src.beta).vertices
    tgt_v = src_v @ R
    s_ft = face_tris(project(src_v, SYNTH_CAMERA), fine_model.faces)
    t_ft = face_tris(project(tgt_v, SYNTH_CAMERA), fine_model.faces)
    s_corr, _, _ = brute_force_raster(s_ft.tris, s_ft.tri_depth, 48, 48)
    t_corr, _, _ = brute_force_raster(t_ft.tris, t_ft.tri_depth, 48, 48)
    vis = set(s_corr[s_corr >= 0].tolist())
    expected = np.array([[c in vis for c in row] for row in t_corr])
    assert np.array_equal(b.flows[0].valid, expected)
    assert b.flows[0].valid.mean() == expected.mean()


def test_swap_t1_is_head_silhouette(model, rest_params):
    sw = swap_flows(model, rest_params, rest_params, model.head_faces, 48, 48)
    assert np.array_equal(sw.t1.valid, sw.head_maps.silhouette)
    assert sw.t1.valid.any()
    grid = pixel_centers(48, 48)
    assert np.array_equal(sw.t1.flow[sw.t1.valid], grid[sw.t1.valid])


def test_swap_same_person_body_identity(fine_model):
    p = BodyParams(np.zeros(6), [0.0], SYNTH_CAMERA)
    sw = swap_flows(fine_model, p, p, fine_model.head_faces, 64, 64)
    t2 = sw.t2
    assert np.array_equal(t2.valid, sw.src_body_maps.silhouette)
    assert np.abs(t2.flow[t2.valid] - pixel_centers(64, 64)[t2.valid]).max() < 1e-4
    assert not (sw.t1.valid & t2.valid).any()


def test_swap_tall_source_short_reference(fine_model):
    src = BodyParams(np.zeros(6), [0.25], CameraWP(0.55))
    ref = BodyParams(np.zeros(6), [-0.25], CameraWP(0.55))
    sw = swap_flows(fine_model, src, ref, fine_model.head_faces, 96, 96)
    body = sw.src_body_maps.silhouette
    assert not (sw.t2.valid & ~body).any()
    assert sw.t2.valid.sum() >= 0.95 * body.sum()
    assert sw.t2.valid.sum() > sw.ref_body_maps.silhouette.sum()
    assert not (sw.t1.valid & sw.t2.valid).any()


def test_swap_rejects_empty_head(model, rest_params):
    with pytest.raises(ValueError):
        swap_flows(model, rest_params, rest_params, [], 16, 16)


def test_mask_decompose_empty_silhouette():
    img = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3)
    maps = RenderMaps(np.full((4, 4), -1, np.int32), np.zeros((4, 4, 3)), np.zeros((4, 4), bool),
                      np.full((4, 4), np.inf))
    fg, bg, mask = mask_decompose(img, maps, 0)
    assert not fg.any()
    assert np.array_equal(bg, img)
    assert not mask.any()


def test_mask_decompose_partition(model, rest_params):
    maps, _ = render(model, rest_params, 24, 24)
    img = np.random.default_rng(0).integers(0, 256, (24, 24, 3), dtype=np.uint8)
    fg, bg, mask = mask_decompose(img, maps, 0)
    assert np.array_equal(mask, maps.silhouette)
    assert np.array_equal(fg.astype(int) + bg, img)


def test_mask_decompose_dilation_square():
    sil = np.zeros((9, 9), bool)
    sil[4, 4] = True
    maps = RenderMaps(np.where(sil, 0, -1).astype(np.int32), np.zeros((9, 9, 3)), sil,
                      np.where(sil, 0.0, np.inf))
    _, _, mask = mask_decompose(np.ones((9, 9, 3), np.uint8), maps, 2)
    expected = np.zeros((9, 9), bool)
    expected[2:7, 2:7] = True
    assert np.array_equal(mask, expected)


def test_mask_decompose_size_mismatch(model, rest_params):
    maps, _ = render(model, rest_params, 8, 8)
    with pytest.raises(ValueError):
        mask_decompose(np.zeros((8, 9, 3), np.uint8), maps)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-0.8, 0.8), min_size=6, max_size=6), st.floats(-0.4, 0.4),
       st.floats(0.3, 0.8), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_self_flow_property(theta, beta, s, tx, ty):
    from liquidwarp.body_model import synth_model

    m = synth_model(4)
    p = BodyParams(theta, [beta], CameraWP(s, tx, ty))
    maps, ft = render(m, p, 40, 40)
    tf = compose_flow(maps, ft, maps)
    if tf.valid.any():
        assert np.abs(tf.flow[tf.valid] - pixel_centers(40, 40)[tf.valid]).max() < 1e-4
