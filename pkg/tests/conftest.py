import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from geomotion.core import (
    WORLD,
    CameraIntrinsics,
    CameraPose,
    PointMap,
    SceneFlow,
    SequenceSample,
    camera_tag,
)
from geomotion.synth import SceneConfig, generate


def random_pose(rng, trans_scale=2.0):
    return CameraPose(Rotation.random(random_state=rng).as_matrix(), rng.uniform(-trans_scale, trans_scale, 3))


def random_sequence(rng, n=3, h=6, w=5, tag=WORLD, p_valid=0.8, dyn=False, f32=False):
    """Random well-formed sequence; `tag="camera"` gives per-frame camera tags."""

    def t(i):
        return camera_tag(i) if tag == "camera" else tag

    def q(a):
        return a.astype(np.float32).astype(np.float64) if f32 else a

    maps, flows = [], []
    for i in range(n):
        mask = rng.random((h, w)) < p_valid
        mask.flat[0] = True
        data = np.where(mask[..., None], q(rng.normal(size=(h, w, 3)) * 3.0), 0.0)
        maps.append(PointMap(data, mask, t(i)))
    for i in range(n - 1):
        mask = maps[i].mask
        flows.append(SceneFlow(np.where(mask[..., None], q(rng.normal(size=(h, w, 3))), 0.0), mask, t(i)))
    poses = []
    for _ in range(n):
        p = random_pose(rng)
        poses.append(CameraPose.from_matrix(q(p.matrix())) if f32 else p)
    K = CameraIntrinsics(q(np.array(10.0 + rng.random())), 11.0, (w - 1) / 2, (h - 1) / 2, w, h)
    masks = [rng.random((h, w)) < 0.5 for _ in range(n - 1)] if dyn else None
    return SequenceSample(maps, flows, poses, K, deformability_masks=masks)


def assert_sequences_identical(a: SequenceSample, b: SequenceSample):
    assert a.frames == b.frames
    assert a.intrinsics == b.intrinsics
    for x, y in zip(a.point_maps, b.point_maps):
        assert x.frame_tag == y.frame_tag
        assert np.array_equal(x.data, y.data) and np.array_equal(x.mask, y.mask)
    assert len(a.flows) == len(b.flows)
    for x, y in zip(a.flows, b.flows):
        assert x.frame_tag == y.frame_tag
        assert np.array_equal(x.data, y.data) and np.array_equal(x.mask, y.mask)
    for x, y in zip(a.poses, b.poses):
        assert np.array_equal(x.rotation, y.rotation) and np.array_equal(x.translation, y.translation)
    if a.deformability_masks is None:
        assert b.deformability_masks is None
    else:
        for x, y in zip(a.deformability_masks, b.deformability_masks):
            assert np.array_equal(x, y)
    if a.norm is None:
        assert b.norm is None
    else:
        assert a.norm.mode == b.norm.mode
        assert a.norm.scale == b.norm.scale and np.array_equal(a.norm.mu, b.norm.mu)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def scene():
    return generate(SceneConfig.random(7, height=32, width=40, frames=4))


# ---------------------------------------------------------------- acceptance verdicts

_VERDICTS: dict = {}


@pytest.fixture
def verdict(request):
    """Record the measured numbers of an acceptance criterion for the summary."""

    def record(cid, title, detail):
        _VERDICTS[request.node.nodeid] = [cid, title, detail, None]

    return record


def pytest_runtest_logreport(report):
    entry = _VERDICTS.get(report.nodeid)
    if entry is None:
        return
    if report.when == "call" or (report.failed and entry[3] is None):
        entry[3] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    order = sorted(_VERDICTS.values(), key=lambda e: int(e[0][1:]))
    for cid, title, detail, status in order:
        terminalreporter.write_line(f"{cid:<4} {status or 'FAIL'}  {title}: {detail}")
