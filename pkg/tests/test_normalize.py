import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_sequence
from geomotion.core import EPS, WORLD, WORLD_NORMALIZED, CameraIntrinsics, CameraPose, NormParams, PointMap, SequenceSample
from geomotion.flowops import deform
from geomotion.normalize import (
    canonical_denormalize,
    canonical_normalize,
    denormalize,
    max_normalize,
    transform_sequence,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _seq_from_points(points_per_frame):
    maps = []
    for pts in points_per_frame:
        pts = np.asarray(pts, dtype=float).reshape(1, -1, 3)
        maps.append(PointMap(pts, np.ones(pts.shape[:2], bool), WORLD))
    w = maps[0].shape[1]
    return SequenceSample(maps, [], [CameraPose.identity()] * len(maps), CameraIntrinsics(1, 1, 0, 0, w, 1))


def _stats(seq):
    pts = np.concatenate([pm.valid_points() for pm in seq.point_maps])
    return pts.mean(axis=0), np.linalg.norm(pts - pts.mean(axis=0), axis=1).mean()


def test_two_point_example():
    seq = _seq_from_points([[[1, 2, 3], [3, 2, 1]]])
    out, params = canonical_normalize(seq)
    np.testing.assert_allclose(params.mu, [2, 2, 2], atol=1e-15)
    assert params.scale == np.sqrt(2.0) + EPS
    np.testing.assert_allclose(out.point_maps[0].data[0], [[-0.70710678, 0, 0.70710678], [0.70710678, 0, -0.70710678]],
                               atol=1e-8)
    assert out.norm == params and out.point_maps[0].frame_tag == WORLD_NORMALIZED


def test_already_normalized_is_fixed_point():
    pts = np.array([[1.0, 0, 0], [-1.0, 0, 0]]) * (1 - EPS)
    out, params = canonical_normalize(_seq_from_points([pts]))
    np.testing.assert_allclose(out.point_maps[0].data[0], pts, atol=1e-9)
    assert abs(params.scale - 1.0) < 1e-15


def test_random_sequence_statistics(rng):
    out, _ = canonical_normalize(random_sequence(rng, n=4, h=8, w=9))
    mu, dist = _stats(out)
    assert np.abs(mu).max() < 1e-9
    assert abs(dist - 1.0) < 1e-6


def test_invalid_pixels_keep_placeholder(rng):
    seq = random_sequence(rng, n=3, p_valid=0.5)
    out, _ = canonical_normalize(seq)
    for pm in out.point_maps:
        assert np.all(pm.data[~pm.mask] == 0.0)
    for f in out.flows:
        assert np.all(f.data[~f.mask] == 0.0)


def test_poses_and_flows_follow_points(rng):
    seq = random_sequence(rng, n=3)
    out, p = canonical_normalize(seq)
    for a, b in zip(seq.poses, out.poses):
        np.testing.assert_allclose(b.translation, (a.translation - p.mu) / p.scale, atol=1e-12)
        assert np.array_equal(a.rotation, b.rotation)
    for a, b in zip(seq.flows, out.flows):
        np.testing.assert_allclose(b.data, a.data / p.scale, atol=1e-12)


def test_all_invalid_rejected(rng):
    seq = random_sequence(rng, n=2)
    empty = [PointMap(pm.data * 0, np.zeros(pm.shape, bool)) for pm in seq.point_maps]
    with pytest.raises(ValueError):
        canonical_normalize(seq.replace(point_maps=empty))


def test_camera_frame_rejected(rng):
    with pytest.raises(ValueError):
        canonical_normalize(random_sequence(rng, tag="camera"))


def test_denormalize_round_trip(rng):
    seq = random_sequence(rng, n=3, p_valid=0.7)
    out, params = canonical_normalize(seq)
    back = canonical_denormalize(out, params)
    for a, b in zip(seq.point_maps, back.point_maps):
        np.testing.assert_allclose(b.data, a.data, rtol=1e-9, atol=1e-12)
        assert b.frame_tag == WORLD
    for a, b in zip(seq.flows, back.flows):
        np.testing.assert_allclose(b.data, a.data, rtol=1e-9, atol=1e-12)
    for a, b in zip(seq.poses, back.poses):
        np.testing.assert_allclose(b.translation, a.translation, rtol=1e-9, atol=1e-12)


def test_denormalize_identity_and_arithmetic():
    seq, _ = canonical_normalize(_seq_from_points([[[1, 0, 0], [-1, 0, 0]]]))
    ident = canonical_denormalize(seq, NormParams(np.zeros(3), 1.0))
    assert np.array_equal(ident.point_maps[0].data, seq.point_maps[0].data)
    unit = seq.point_maps[0].data
    out = canonical_denormalize(seq, NormParams(np.ones(3), 2.0))
    np.testing.assert_allclose(out.point_maps[0].data, 2 * unit + 1, atol=1e-15)


def test_denormalize_mode_mismatch(rng):
    out, params = max_normalize(random_sequence(rng))
    with pytest.raises(ValueError):
        canonical_denormalize(out, params)
    back = denormalize(out, params)
    assert back.point_maps[0].frame_tag == WORLD


# ---------------------------------------------------------------- max normalization


def test_max_normalize_cube():
    corners = np.array([[x, y, z] for x in (-2, 2) for y in (-2, 2) for z in (-2, 2)], dtype=float)
    out, params = max_normalize(_seq_from_points([corners]))
    pts = out.point_maps[0].data[0]
    np.testing.assert_allclose(pts.min(axis=0), -1, atol=1e-12)
    np.testing.assert_allclose(pts.max(axis=0), 1, atol=1e-12)
    assert params.mode == "max"


def test_max_normalize_cluster(rng):
    pts = 10 + rng.uniform(-0.5, 0.5, (50, 3))
    out, params = max_normalize(_seq_from_points([pts]))
    got = out.point_maps[0].data[0]
    lo, hi = pts.min(0), pts.max(0)
    np.testing.assert_allclose(params.mu, (lo + hi) / 2)
    np.testing.assert_allclose(params.scale, (hi - lo).max() / 2 + EPS)
    assert got.min() >= -1 and got.max() <= 1
    assert abs(got.max(0) - got.min(0)).max() == pytest.approx(2.0, abs=1e-9)


def test_max_normalize_degenerate():
    out, params = max_normalize(_seq_from_points([np.full((4, 3), 3.0)]))
    assert params.scale == EPS
    assert np.all(out.point_maps[0].data == 0.0)


# ---------------------------------------------------------------- properties


def _max_abs_diff(a, b):
    d = max(np.abs(x.data - y.data).max() for x, y in zip(a.point_maps, b.point_maps))
    d = max([d] + [np.abs(x.data - y.data).max() for x, y in zip(a.flows, b.flows)])
    return max([d] + [np.abs(x.translation - y.translation).max() for x, y in zip(a.poses, b.poses)])


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(1e-2, 1e2))
def test_scale_invariance(seed, k):
    seq = random_sequence(np.random.default_rng(seed), n=3, h=5, w=4)
    base, _ = canonical_normalize(seq)
    scaled, _ = canonical_normalize(transform_sequence(seq, k, np.zeros(3)))
    assert _max_abs_diff(base, scaled) < 1e-9


@settings(max_examples=50, deadline=None)
@given(seeds, st.tuples(*[st.floats(-1e5, 1e5)] * 3))
def test_translation_invariance(seed, c):
    seq = random_sequence(np.random.default_rng(seed), n=3, h=5, w=4)
    base, _ = canonical_normalize(seq)
    moved, _ = canonical_normalize(transform_sequence(seq, 1.0, np.array(c)))
    assert _max_abs_diff(base, moved) < 1e-9


def test_normalization_commutes_with_deformation(scene):
    world = scene.world_metric
    out, p = canonical_normalize(world)
    for i in range(world.frames - 1):
        d_metric = deform(world.point_maps[i], world.flows[i])
        d_norm = deform(out.point_maps[i], out.flows[i])
        m = d_norm.mask
        np.testing.assert_allclose(d_norm.data[m], (d_metric.data[m] - p.mu) / p.scale, atol=1e-9)
