import subprocess
import sys

import numpy as np
import pytest

from geomotion import io
from geomotion.cli import EXIT_CODES, main

CONFIG = "height = 24\nwidth = 28\nframes = 3\nn_movers = 1\n"


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "scene.cfg").write_text(CONFIG)
    assert main(["synth", "--config", str(root / "scene.cfg"), "--seed", "5", "--out", str(root / "s")]) == 0
    return root


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_synth_writes_both_sequences(run_dir):
    world = io.read_sequence(run_dir / "s" / "gt_world")
    cam = io.read_sequence(run_dir / "s" / "gt_camera")
    assert world.frames == cam.frames == 3 and world.shape == (24, 28)
    assert world.frame_tag == "world-normalized" and cam.frame_tag == "camera"


def test_synth_without_config(tmp_path, capsys):
    code, out, _ = _run(capsys, "synth", "--seed", 1, "--out", tmp_path / "d")
    assert code == 0 and "gt_world" in out


def test_eval_identical_dirs(run_dir, capsys):
    gt = run_dir / "s" / "gt_world"
    code, out, _ = _run(capsys, "eval", "--pred", gt, "--gt", gt, "--gamma", 0.1, "--report", run_dir / "r.txt")
    assert code == 0
    kv = dict(line.split("=") for line in out.splitlines())
    assert (kv["rel_p"], kv["delta_p"], kv["epe"], kv["apd"]) == ("0.000000", "100.000000", "0.000000", "100.000000")
    assert (run_dir / "r.txt").read_text() == out


def test_preprocess_canonical_stats(run_dir, capsys):
    out_dir = run_dir / "pre"
    code, out, _ = _run(capsys, "preprocess", "--in", run_dir / "s" / "gt_camera", "--out", out_dir,
                        "--norm", "canonical")
    assert code == 0 and "norm_scale=" in out
    seq = io.read_sequence(out_dir)
    pts = np.concatenate([pm.data[pm.mask] for pm in seq.point_maps])
    assert np.abs(pts.mean(axis=0)).max() < 1e-6
    assert abs(np.linalg.norm(pts - pts.mean(axis=0), axis=1).mean() - 1.0) < 1e-6
    assert seq.norm is not None and seq.norm.mode == "canonical"


@pytest.mark.parametrize("flags", [["--norm", "max"], ["--norm", "none"], ["--pad"]])
def test_preprocess_variants(run_dir, capsys, flags, tmp_path):
    code, _, _ = _run(capsys, "preprocess", "--in", run_dir / "s" / "gt_camera", "--out", tmp_path / "o", *flags)
    assert code == 0
    seq = io.read_sequence(tmp_path / "o")
    if "--pad" in flags:
        # filled values are written, masks still mark them invalid
        pm = next(p for p in seq.point_maps if not p.mask.all())
        assert np.all(np.isfinite(pm.data)) and np.abs(pm.data[~pm.mask]).sum(axis=-1).min() > 0


def test_preprocess_matches_gt_after_eval(run_dir, capsys):
    _run(capsys, "preprocess", "--in", run_dir / "s" / "gt_camera", "--out", run_dir / "pre2")
    code, out, _ = _run(capsys, "eval", "--pred", run_dir / "pre2", "--gt", run_dir / "s" / "gt_world", "--gamma", 0.05)
    kv = dict(line.split("=") for line in out.splitlines())
    # camera data went through float32 on disk, so agreement is at single precision
    assert code == 0 and float(kv["rel_p"]) < 1e-3 and kv["apd"] == "100.000000"


def test_loss_command(run_dir, capsys, tmp_path):
    gt = run_dir / "s" / "gt_world"
    code, out, _ = _run(capsys, "loss", "--pred", gt, "--gt", gt)
    kv = dict(line.split("=") for line in out.splitlines())
    assert code == 0 and float(kv["geometry"]) == 0.0
    assert set(kv) == {"point", "depth_l1", "patch_depth", "normal", "geometry", "sceneflow", "reg", "motion"}
    w = tmp_path / "w.txt"
    w.write_text("lambda_normal = 0.5\npatch_scales = 4,8\n")
    assert _run(capsys, "loss", "--pred", gt, "--gt", gt, "--weights", w)[0] == 0
    w.write_text("lambda_kl = 1\n")
    code, _, err = _run(capsys, "loss", "--pred", gt, "--gt", gt, "--weights", w)
    assert code == 1 and err.count("\n") == 1


def test_gradcheck_default_passes(capsys):
    code, out, _ = _run(capsys, "gradcheck", "--trials", 20)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 5 and all(line.endswith("PASS") for line in lines)


def test_validate(run_dir, capsys, tmp_path):
    code, out, _ = _run(capsys, "validate", "--in", run_dir / "s" / "gt_camera")
    assert code == 0 and out.strip() == "ok"
    bad = tmp_path / "bad"
    seq = io.read_sequence(run_dir / "s" / "gt_camera")
    io.write_sequence(seq, bad)
    io.write_tensor(bad / "pose_0001.4dk", 2 * seq.poses[1].matrix())
    code, out, err = _run(capsys, "validate", "--in", bad)
    assert code == 1 and "poses[1]" in out and err.count("\n") == 1


@pytest.mark.parametrize("breakage, error", [
    ("truncate", "PayloadLengthError"),
    ("magic", "BadMagicError"),
    ("extra_flow", "FlowCountError"),
    ("missing", "MissingFileError"),
])
def test_failures_emit_one_line_and_distinct_codes(run_dir, capsys, tmp_path, breakage, error):
    src = run_dir / "s" / "gt_world"
    d = tmp_path / "broken"
    io.write_sequence(io.read_sequence(src), d)
    f = d / "pointmap_0000.4dk"
    if breakage == "truncate":
        f.write_bytes(f.read_bytes()[:-1])
    elif breakage == "magic":
        f.write_bytes(b"ABCD" + f.read_bytes()[4:])
    elif breakage == "extra_flow":
        (d / "flow_0002.4dk").write_bytes((d / "flow_0000.4dk").read_bytes())
    else:
        f.unlink()
    code, out, err = _run(capsys, "eval", "--pred", d, "--gt", src, "--gamma", 0.1)
    assert code == EXIT_CODES[getattr(io, error)]
    assert err.startswith("error: ") and err.count("\n") == 1 and out == ""


def test_usage_error_is_one_line(capsys):
    with pytest.raises(SystemExit) as e:
        main(["eval", "--pred", "x"])
    assert e.value.code == 2
    assert capsys.readouterr().err.count("\n") == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "geomotion", "validate", "--in", str(tmp_path / "none")],
                         capture_output=True, text=True)
    assert res.returncode == EXIT_CODES[io.MissingFileError]
    assert res.stderr.count("\n") == 1 and res.stdout == ""
