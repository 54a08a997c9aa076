"""Command-line interface.

    geomotion synth --config scene.cfg --seed 0 --out runs/scene0
    geomotion preprocess --in runs/scene0/gt_camera --out runs/scene0/pre --norm canonical
    geomotion eval --pred runs/scene0/pre --gt runs/scene0/gt_world --gamma 0.1
    geomotion loss --pred runs/scene0/pre --gt runs/scene0/gt_world
    geomotion gradcheck --trials 100 --seed 0
    geomotion validate --in runs/scene0/gt_camera

Scene config files are ``key = value`` lines ('#' comments allowed). Keys:

    height, width, frames        image size and sequence length (64, 64, 8)
    trajectory                   orbit | dolly | static (orbit)
    fov_deg                      horizontal field of view (60)
    orbit_radius, orbit_span_deg camera orbit (7.0, 40); dolly uses orbit_radius as start distance
    camera_height, dolly_step    (2.5, 0.25)
    ground_y                     floor height, y points down (1.0)
    n_boxes, n_movers            static boxes and rigid movers (3, 2)
    mover_speed, mover_spin_deg  per-frame mover speed and spin (0.15, 6)
    seed                         placement seed; --seed overrides it

Weights files for ``loss`` use the LossWeights field names, e.g.
``lambda_normal = 0.2`` and ``patch_scales = 4,16,64``.

Every command exits 0 on success. Failures print one ``error: ...`` line on
stderr and exit 1, or a format-specific code for unreadable sequence files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import validate_sequence
from .losses import GRADCHECK_TOL, LossWeights, geometry_loss, gradcheck, motion_loss
from .metrics import evaluate_sequence
from .pipeline import NORM_MODES, preprocess
from .synth import generate, parse_config_text

GRADCHECK_LOSSES = ("point", "depth_l1", "patch_depth", "normal", "motion")

EXIT_CODES = {
    io.MissingFileError: 3,
    io.BadMagicError: 4,
    io.BadDtypeError: 5,
    io.HeaderError: 6,
    io.PayloadLengthError: 7,
    io.DimMismatchError: 8,
    io.FlowCountError: 9,
    io.ManifestError: 10,
}


class CommandError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"error: {message}\n")
        sys.exit(2)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def cmd_synth(args) -> int:
    text = Path(args.config).read_text() if args.config else ""
    config = parse_config_text(text, seed=args.seed)
    scene = generate(config)
    out = Path(args.out)
    io.write_sequence(scene.world, out / "gt_world")
    io.write_sequence(scene.camera, out / "gt_camera")
    print(f"wrote {out / 'gt_world'} and {out / 'gt_camera'} ({config.frames} frames, {config.height}x{config.width})")
    return 0


def cmd_preprocess(args) -> int:
    seq = io.read_sequence(args.inp)
    out = preprocess(seq, norm=args.norm, pad=args.pad)
    io.write_sequence(out, args.out)
    if out.norm is not None:
        mu = out.norm.mu
        print(f"norm_mode={out.norm.mode}")
        print(f"norm_mu={_fmt(mu[0])},{_fmt(mu[1])},{_fmt(mu[2])}")
        print(f"norm_scale={_fmt(out.norm.scale)}")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    pred = io.read_sequence(args.pred)
    gt = io.read_sequence(args.gt)
    report = evaluate_sequence(pred, gt, tau=args.tau, gamma=args.gamma)
    text = report.to_text()
    sys.stdout.write(text)
    if args.report:
        Path(args.report).write_text(text)
    return 0


def read_weights(path) -> LossWeights:
    kv = io.parse_key_values(Path(path).read_text())
    known = set(LossWeights.__dataclass_fields__)
    unknown = set(kv) - known
    if unknown:
        raise CommandError(f"unknown weight keys: {sorted(unknown)}")
    values = {}
    for k, v in kv.items():
        values[k] = tuple(int(s) for s in v.split(",")) if k == "patch_scales" else float(v)
    return LossWeights(**values)


def cmd_loss(args) -> int:
    pred = io.read_sequence(args.pred)
    gt = io.read_sequence(args.gt)
    if pred.frames != gt.frames or pred.shape != gt.shape:
        raise CommandError("pred and gt sequences differ in frame count or image size")
    weights = read_weights(args.weights) if args.weights else LossWeights()
    geo = [geometry_loss(p, g, pose, gt.intrinsics, weights)
           for p, g, pose in zip(pred.point_maps, gt.point_maps, gt.poses)]
    mot = [motion_loss(p.data, g, None, weights) for p, g in zip(pred.flows, gt.flows)]
    rows = {
        "point": np.mean([r.components["point"] for r in geo]),
        "depth_l1": np.mean([r.components["depth_l1"] for r in geo]),
        "patch_depth": np.mean([r.components["patch_depth"] for r in geo]),
        "normal": np.mean([r.components["normal"] for r in geo]),
        "geometry": np.mean([r.value for r in geo]),
        "sceneflow": np.mean([r.components["sceneflow"] for r in mot]),
        "reg": np.mean([r.components["reg"] for r in mot]),
        "motion": np.mean([r.value for r in mot]),
    }
    for k, v in rows.items():
        print(f"{k}={_fmt(float(v))}")
    return 0


def cmd_gradcheck(args) -> int:
    failed = []
    for loss_id in GRADCHECK_LOSSES:
        rep = gradcheck(loss_id, args.trials, args.seed)
        status = "PASS" if rep.passed else "FAIL"
        print(f"{loss_id} max_rel_error={rep.max_rel_error:.3e} tol={GRADCHECK_TOL[loss_id]:.0e} {status}")
        if not rep.passed:
            failed.append(loss_id)
    if failed:
        raise CommandError(f"gradient check failed for {', '.join(failed)}")
    return 0


def cmd_validate(args) -> int:
    seq = io.read_sequence(args.inp)
    problems = validate_sequence(seq)
    for p in problems:
        print(p)
    if problems:
        raise CommandError(f"{len(problems)} invariant violation(s)")
    print("ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geomotion", description="World-frame point map / scene flow toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dynamic scene")
    p.add_argument("--config", help="scene config file (key = value lines)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="camera-frame sequence -> normalized world frame")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--norm", choices=NORM_MODES, default="canonical")
    p.add_argument("--pad", action="store_true", help="pyramid-pad invalid pixels")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("eval", help="aligned world-space evaluation")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--tau", type=float, default=0.25)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss", help="geometry and motion loss components")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--weights")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", help="finite-difference checks of all loss gradients")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("validate", help="check sequence invariants")
    p.add_argument("--in", dest="inp", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except io.FormatError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CODES.get(type(exc), 1)
    except (CommandError, ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
