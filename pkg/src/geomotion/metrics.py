"""World-space evaluation: per-sequence scale/shift alignment, Rel^p, delta^p, EPE, APD.

All percentages are raw numbers in [0, 100].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import EPS, PointMap, SceneFlow, SequenceSample

REL_MIN_NORM = 1e-6
REPORT_KEYS = (
    "rel_p", "delta_p", "tau", "epe", "apd", "gamma",
    "scale", "shift_x", "shift_y", "shift_z", "n_points", "n_flows",
)


@dataclass(frozen=True)
class AlignParams:
    s: float
    t: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls) -> "AlignParams":
        return cls(1.0, np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.s * points + self.t


@dataclass(frozen=True)
class MetricsReport:
    rel_p: float
    delta_p: float
    tau: float
    epe: float
    apd: float
    gamma: float
    align: AlignParams = field(default_factory=AlignParams.identity)
    n_points: int = 0
    n_flows: int = 0

    def as_dict(self) -> dict:
        return {
            "rel_p": self.rel_p, "delta_p": self.delta_p, "tau": self.tau,
            "epe": self.epe, "apd": self.apd, "gamma": self.gamma,
            "scale": self.align.s,
            "shift_x": self.align.t[0], "shift_y": self.align.t[1], "shift_z": self.align.t[2],
            "n_points": self.n_points, "n_flows": self.n_flows,
        }

    def to_text(self) -> str:
        lines = []
        for key, val in self.as_dict().items():
            if key.startswith("n_"):
                lines.append(f"{key}={int(val)}")
            else:
                lines.append(f"{key}={float(val):.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
        missing = [k for k in REPORT_KEYS if k not in kv]
        if missing:
            raise ValueError(f"report missing keys: {missing}")
        align = AlignParams(float(kv["scale"]), [float(kv[f"shift_{a}"]) for a in "xyz"])
        return cls(
            float(kv["rel_p"]), float(kv["delta_p"]), float(kv["tau"]),
            float(kv["epe"]), float(kv["apd"]), float(kv["gamma"]),
            align, int(kv["n_points"]), int(kv["n_flows"]),
        )


def _arrays(items, masks) -> tuple[list[np.ndarray], list[np.ndarray]]:
    data = [x.data if isinstance(x, (PointMap, SceneFlow)) else np.asarray(x, dtype=np.float64) for x in items]
    if masks is None:
        out_masks = [x.mask if isinstance(x, (PointMap, SceneFlow)) else np.ones(d.shape[:-1], bool)
                     for x, d in zip(items, data)]
    else:
        out_masks = [np.asarray(m, dtype=bool) for m in masks]
    if len(out_masks) != len(data):
        raise ValueError("one mask per frame required")
    return data, out_masks


def _pool(pred, gt, masks) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pred, (PointMap, SceneFlow, np.ndarray)) and np.ndim(getattr(pred, "data", pred)) == 3:
        pred, gt = [pred], [gt]
        masks = None if masks is None else [masks]
    if len(pred) != len(gt):
        raise ValueError(f"frame count mismatch: {len(pred)} vs {len(gt)}")
    p, mp = _arrays(pred, masks)
    g, mg = _arrays(gt, masks)
    m = [a & b for a, b in zip(mp, mg)]
    for pi, gi, mi in zip(p, g, m):
        if pi.shape != gi.shape or pi.shape[:-1] != mi.shape:
            raise ValueError(f"shape mismatch: {pi.shape}, {gi.shape}, mask {mi.shape}")
    pp = np.concatenate([pi[mi] for pi, mi in zip(p, m)]) if p else np.zeros((0, 3))
    gg = np.concatenate([gi[mi] for gi, mi in zip(g, m)]) if g else np.zeros((0, 3))
    return pp, gg


def solve_scale_shift(pred, gt, masks=None) -> AlignParams:
    """Least-squares s, t minimizing sum ||s * pred + t - gt||^2 over pooled valid points."""
    p, g = _pool(pred, gt, masks)
    if len(p) == 0:
        raise ValueError("no valid points to align")
    mp = p.mean(axis=0)
    mg = g.mean(axis=0)
    dp = p - mp
    dg = g - mg
    var = float(np.sum(dp * dp))
    if var <= 0.0 or len(p) < 2:
        return AlignParams(EPS, mg - EPS * mp, degenerate=True)
    s = float(np.sum(dp * dg)) / var
    if s <= 0.0:
        return AlignParams(EPS, mg - EPS * mp, degenerate=True)
    return AlignParams(s, mg - s * mp)


def _relative_errors(pred_aligned, gt, masks, min_norm: float) -> np.ndarray:
    p, g = _pool(pred_aligned, gt, masks)
    gn = np.linalg.norm(g, axis=1)
    keep = gn >= min_norm
    if not keep.any():
        raise ValueError("no evaluable points")
    return np.linalg.norm(p[keep] - g[keep], axis=1) / gn[keep]


def rel_p(pred_aligned, gt, masks=None, min_norm: float = REL_MIN_NORM) -> float:
    return 100.0 * float(np.mean(_relative_errors(pred_aligned, gt, masks, min_norm)))


def delta_p(pred_aligned, gt, masks=None, tau: float = 0.25, min_norm: float = REL_MIN_NORM) -> float:
    rel = _relative_errors(pred_aligned, gt, masks, min_norm)
    return 100.0 * float(np.mean(rel < tau))


def _endpoint_errors(pred_flow, gt_flow, masks, align: Optional[AlignParams]) -> np.ndarray:
    p, g = _pool(pred_flow, gt_flow, masks)
    if len(p) == 0:
        raise ValueError("no valid flow pixels")
    s = 1.0 if align is None else align.s
    return np.linalg.norm(s * p - g, axis=1)


def epe(pred_flow, gt_flow, masks=None, align: Optional[AlignParams] = None) -> float:
    """Mean endpoint error of scale-aligned flow (flows are never shifted)."""
    return float(np.mean(_endpoint_errors(pred_flow, gt_flow, masks, align)))


def apd(pred_flow, gt_flow, masks=None, align: Optional[AlignParams] = None, gamma: float = 0.1) -> float:
    return 100.0 * float(np.mean(_endpoint_errors(pred_flow, gt_flow, masks, align) < gamma))


def evaluate_sequence(
    pred: SequenceSample,
    gt: SequenceSample,
    tau: float = 0.25,
    gamma: float = 0.1,
    min_norm: float = REL_MIN_NORM,
) -> MetricsReport:
    if pred.frames != gt.frames or len(pred.flows) != len(gt.flows):
        raise ValueError(f"frame count mismatch: {pred.frames} vs {gt.frames}")
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    align = solve_scale_shift(pred.point_maps, gt.point_maps)
    geo_masks = [a.mask & b.mask for a, b in zip(pred.point_maps, gt.point_maps)]
    aligned = [align.apply(pm.data) for pm in pred.point_maps]
    gt_pts = [pm.data for pm in gt.point_maps]
    rel = _relative_errors(aligned, gt_pts, geo_masks, min_norm)
    flow_masks = [a.mask & b.mask for a, b in zip(pred.flows, gt.flows)]
    ep = _endpoint_errors([f.data for f in pred.flows], [f.data for f in gt.flows], flow_masks, align)
    return MetricsReport(
        rel_p=100.0 * float(np.mean(rel)),
        delta_p=100.0 * float(np.mean(rel < tau)),
        tau=tau,
        epe=float(np.mean(ep)),
        apd=100.0 * float(np.mean(ep < gamma)),
        gamma=gamma,
        align=align,
        n_points=int(len(rel)),
        n_flows=int(len(ep)),
    )
