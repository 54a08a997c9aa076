"""Geometry and motion training objectives with analytic gradients.

Every loss returns a LossResult carrying the scalar value and the gradient
with respect to the prediction array (same shape as the prediction). The
prediction may be a raw HxWx3 array or a PointMap/SceneFlow; masks default
to the intersection of whatever masks the inputs carry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import CameraIntrinsics, CameraPose, PointMap, SceneFlow
from .geomath import DEPTH_MIN, camera_depth, normal_stencil


@dataclass(frozen=True)
class LossWeights:
    lambda_point: float = 1.0
    lambda_l1_depth: float = 1.0
    lambda_patch_depth: float = 1.0
    lambda_normal: float = 0.2
    lambda_sceneflow: float = 1.0
    lambda_reg: float = 0.01
    patch_scales: tuple[int, ...] = (4, 16, 64)

    def __post_init__(self):
        object.__setattr__(self, "patch_scales", tuple(int(s) for s in self.patch_scales))
        for name in ("lambda_point", "lambda_l1_depth", "lambda_patch_depth",
                     "lambda_normal", "lambda_sceneflow", "lambda_reg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.patch_scales or min(self.patch_scales) < 1:
            raise ValueError("patch scales must be positive")


@dataclass
class LossResult:
    value: float
    grad: np.ndarray
    components: dict = field(default_factory=dict)


def _unpack(pred, gt, mask):
    p = pred.data if isinstance(pred, (PointMap, SceneFlow)) else np.asarray(pred, dtype=np.float64)
    g = gt.data if isinstance(gt, (PointMap, SceneFlow)) else np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    m = np.ones(p.shape[:2], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    for x in (pred, gt):
        if isinstance(x, (PointMap, SceneFlow)):
            m = m & x.mask
    return p, g, m


def point_loss(pred, gt, mask=None) -> LossResult:
    """Mean squared point error over valid pixels."""
    p, g, m = _unpack(pred, gt, mask)
    n = int(m.sum())
    if n == 0:
        return LossResult(0.0, np.zeros_like(p))
    diff = np.where(m[..., None], p - g, 0.0)
    value = float(np.sum(diff * diff)) / n
    return LossResult(value, 2.0 * diff / n)


def _depths(p, g, m, pose: CameraPose, K: Optional[CameraIntrinsics]):
    if K is not None and (K.height, K.width) != m.shape:
        raise ValueError(f"intrinsics size {K.height}x{K.width} does not match map {m.shape}")
    dp = camera_depth(p, pose)
    dg = camera_depth(g, pose)
    valid = m & (dp > DEPTH_MIN) & (dg > DEPTH_MIN)
    if not valid.any():
        raise ValueError("no jointly valid depth pixels")
    return dp, dg, valid


def _depth_grad_to_points(gd: np.ndarray, pose: CameraPose) -> np.ndarray:
    # d(depth)/d(point) is the camera z axis expressed in world coordinates
    return gd[..., None] * pose.rotation[:, 2]


def depth_l1_loss(pred, gt, pose: CameraPose, K: Optional[CameraIntrinsics] = None, mask=None) -> LossResult:
    p, g, m = _unpack(pred, gt, mask)
    dp, dg, valid = _depths(p, g, m, pose, K)
    n = int(valid.sum())
    e = np.where(valid, dp - dg, 0.0)
    value = float(np.abs(e).sum()) / n
    return LossResult(value, _depth_grad_to_points(np.sign(e) / n, pose))


def _patch_ids(h: int, w: int, s: int) -> np.ndarray:
    """Label of the s x s patch each pixel falls in; trailing patches may be smaller."""
    pw = -(-w // s)
    return (np.arange(h)[:, None] // s) * pw + (np.arange(w)[None, :] // s)


def _patch_residual_grad(e: np.ndarray, valid: np.ndarray, s: int):
    """Value and depth gradient of mean |e - patch_mean(e)| for one patch size."""
    h, w = e.shape
    ids = _patch_ids(h, w, s).ravel()
    v = valid.ravel()
    ev = np.where(v, e.ravel(), 0.0)
    npatch = ids.max() + 1
    count = np.bincount(ids, weights=v.astype(np.float64), minlength=npatch)
    safe = np.where(count > 0, count, 1.0)
    mean = np.bincount(ids, weights=ev, minlength=npatch) / safe
    r = np.where(v, ev - mean[ids], 0.0)
    n = v.sum()
    value = float(np.abs(r).sum()) / n
    g = np.where(v, np.sign(r) / n, 0.0)
    # Jacobian of the mean subtraction: I - (1/n_p) 11^T inside each patch
    g_mean = np.bincount(ids, weights=g, minlength=npatch) / safe
    grad = np.where(v, g - g_mean[ids], 0.0)
    return value, grad.reshape(h, w)


def patch_depth_loss(
    pred, gt, pose: CameraPose, K: Optional[CameraIntrinsics] = None,
    scales=(4, 16, 64), mask=None,
) -> LossResult:
    """Multi-scale L1 on depth after removing each patch's masked mean depth.

    Patches are s x s pixels for each s in `scales`; the loss sums over scales
    and is blind to a constant depth offset inside any patch.
    """
    p, g, m = _unpack(pred, gt, mask)
    dp, dg, valid = _depths(p, g, m, pose, K)
    e = dp - dg
    value = 0.0
    gd = np.zeros_like(e)
    per_scale = {}
    for s in scales:
        v, gs = _patch_residual_grad(e, valid, int(s))
        per_scale[f"patch_{s}"] = v
        value += v
        gd += gs
    return LossResult(value, _depth_grad_to_points(gd, pose), per_scale)


def normal_loss(pred, gt, mask=None) -> LossResult:
    """Mean (1 - cos) between central-difference normals of pred and gt."""
    p, g, m = _unpack(pred, gt, mask)
    mp, dup, dvp, vp = normal_stencil(p, m)
    mg, _, _, vg = normal_stencil(g, m)
    valid = vp & vg
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid normal stencils")
    norm_p = np.linalg.norm(mp, axis=-1, keepdims=True)
    norm_g = np.linalg.norm(mg, axis=-1, keepdims=True)
    norm_p = np.where(valid[..., None], norm_p, 1.0)
    norm_g = np.where(valid[..., None], norm_g, 1.0)
    np_hat = mp / norm_p
    ng_hat = mg / norm_g
    cos = np.sum(np_hat * ng_hat, axis=-1)
    # 1 - cos written as half the squared chord: exact zero for equal normals, never negative
    chord = np_hat - ng_hat
    value = float(np.sum(np.where(valid, 0.5 * np.sum(chord * chord, axis=-1), 0.0))) / n

    # d/dm of -<m/|m|, ng>/n = -(I - nn^T) ng / (|m| n)
    a = -(ng_hat - cos[..., None] * np_hat) / (norm_p * n)
    a = np.where(valid[..., None], a, 0.0)
    # m = dv x du  =>  <a, dm> = <du x a, d dv> + <a x dv, d du>
    g_dv = np.cross(dup, a)
    g_du = np.cross(a, dvp)
    grad = np.zeros_like(p)
    grad[1:-1, 2:] += g_du
    grad[1:-1, :-2] -= g_du
    grad[2:, 1:-1] += g_dv
    grad[:-2, 1:-1] -= g_dv
    return LossResult(value, grad)


def geometry_loss(
    pred, gt, pose: CameraPose, K: Optional[CameraIntrinsics] = None,
    weights: LossWeights = LossWeights(), mask=None,
) -> LossResult:
    parts = {
        "point": (weights.lambda_point, point_loss(pred, gt, mask)),
        "depth_l1": (weights.lambda_l1_depth, depth_l1_loss(pred, gt, pose, K, mask)),
        "patch_depth": (weights.lambda_patch_depth,
                        patch_depth_loss(pred, gt, pose, K, weights.patch_scales, mask)),
        "normal": (weights.lambda_normal, normal_loss(pred, gt, mask)),
    }
    value = 0.0
    grad = None
    for lam, res in parts.values():
        value += lam * res.value
        grad = lam * res.grad if grad is None else grad + lam * res.grad
    return LossResult(value, grad, {k: res.value for k, (_, res) in parts.items()})


def motion_loss(pred_flow, gt_flow, valid_mask=None, weights: LossWeights = LossWeights()) -> LossResult:
    """Flow MSE on valid pixels plus a zero-flow penalty over every pixel.

    The regularizer deliberately reaches invalid pixels, pulling unsupervised
    flow toward zero.
    """
    p, g, m = _unpack(pred_flow, gt_flow, valid_mask)
    n_all = m.size
    n = int(m.sum())
    if n:
        diff = np.where(m[..., None], p - g, 0.0)
        recon = float(np.sum(diff * diff)) / n
        g_recon = 2.0 * diff / n
    else:
        recon = 0.0
        g_recon = np.zeros_like(p)
    reg = float(np.sum(p * p)) / n_all
    value = weights.lambda_sceneflow * recon + weights.lambda_reg * reg
    grad = weights.lambda_sceneflow * g_recon + weights.lambda_reg * 2.0 * p / n_all
    return LossResult(value, grad, {"sceneflow": recon, "reg": reg})


# ---------------------------------------------------------------------------
# finite-difference gradient checks

# piecewise-linear parts of each loss, used to spot stencils that straddle a kink
_PIECEWISE_LINEAR = {
    "depth_l1": (None,),
    "patch_depth": (None,),
    "geometry": ("depth_l1", "patch_depth"),
}

GRADCHECK_TOL = {
    "point": 1e-5,
    "depth_l1": 1e-5,
    "patch_depth": 1e-5,
    "normal": 1e-4,
    "motion": 1e-5,
    "geometry": 1e-4,
}


@dataclass
class GradcheckReport:
    loss_id: str
    trials: int
    max_rel_error: float
    tol: float
    redraws: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def _random_pose(rng: np.random.Generator) -> CameraPose:
    from scipy.spatial.transform import Rotation

    return CameraPose(Rotation.random(random_state=rng).as_matrix(), rng.uniform(-1, 1, 3))


def _smooth_surface(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    rr, cc = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    a = rng.uniform(-0.5, 0.5, 4)
    z = 20.0 + a[0] * np.sin(0.3 * rr) + a[1] * np.cos(0.2 * cc) + a[2] * 0.05 * rr + a[3] * 0.05 * cc
    return np.stack([cc - w / 2, rr - h / 2, z], axis=-1)


def _gradcheck_problem(loss_id: str, rng: np.random.Generator, h: int = 20, w: int = 22):
    """Random inputs for `loss_id` and a closure f(pred) -> LossResult."""
    weights = LossWeights()
    mask = rng.random((h, w)) > 0.15
    if loss_id in ("point", "motion"):
        pred = rng.normal(size=(h, w, 3))
        gt = rng.normal(size=(h, w, 3))
        if loss_id == "point":
            return pred, lambda x: point_loss(x, gt, mask)
        return pred, lambda x: motion_loss(x, gt, mask, weights)

    pose = _random_pose(rng)
    cam_pts = np.concatenate([rng.uniform(-1, 1, (h, w, 2)), rng.uniform(1, 3, (h, w, 1))], axis=-1)
    if loss_id in ("normal", "geometry"):
        cam_pts = _smooth_surface(rng, h, w)
        mask = np.ones((h, w), dtype=bool)
        mask[rng.integers(0, h, 4), rng.integers(0, w, 4)] = False
    gt = pose.apply(cam_pts)
    if loss_id in ("normal", "geometry"):
        noise = 0.2 * rng.normal(size=gt.shape)
    else:
        noise = 0.3 * rng.normal(size=gt.shape)
    pred = gt + noise
    fns: dict[str, Callable] = {
        "depth_l1": lambda x: depth_l1_loss(x, gt, pose, None, mask),
        "patch_depth": lambda x: patch_depth_loss(x, gt, pose, None, weights.patch_scales, mask),
        "normal": lambda x: normal_loss(x, gt, mask),
        "geometry": lambda x: geometry_loss(x, gt, pose, None, weights, mask),
    }
    return pred, fns[loss_id]


def gradcheck(loss_id: str, trial_count: int = 100, seed: int = 0, h: float = 1e-4) -> GradcheckReport:
    """Compare analytic gradients with central differences at random coordinates.

    Relative error is |analytic - numeric| / max(|analytic|, |numeric|), with
    coordinates where both vanish counted as exact. For losses with L1 terms a
    coordinate is redrawn when its +-h stencil crosses a kink of those terms
    (forward and backward differences disagree); the test only inspects the
    loss values, so it cannot mask a wrong analytic gradient.
    """
    if loss_id not in GRADCHECK_TOL:
        raise ValueError(f"unknown loss id {loss_id!r}; choose from {sorted(GRADCHECK_TOL)}")
    rng = np.random.default_rng(seed)
    x, fn = _gradcheck_problem(loss_id, rng)
    analytic = fn(x).grad
    base = fn(x)
    kinked = _PIECEWISE_LINEAR.get(loss_id, ())
    worst = 0.0
    done = 0
    redraws = 0
    while done < trial_count:
        idx = tuple(int(rng.integers(0, d)) for d in x.shape)
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        rp, rm = fn(xp), fn(xm)
        if kinked and redraws < 10 * trial_count and _straddles_kink(base, rp, rm, kinked):
            redraws += 1
            continue
        done += 1
        numeric = (rp.value - rm.value) / (2 * h)
        a = analytic[idx]
        denom = max(abs(a), abs(numeric))
        if denom < 1e-12:
            continue
        worst = max(worst, abs(a - numeric) / denom)
    return GradcheckReport(loss_id, trial_count, worst, GRADCHECK_TOL[loss_id], redraws)


def _straddles_kink(base: LossResult, plus: LossResult, minus: LossResult, keys) -> bool:
    for key in keys:
        f0, fp, fm = ((r.value if key is None else r.components[key]) for r in (base, plus, minus))
        fwd, bwd = fp - f0, f0 - fm
        if abs(fwd - bwd) > 1e-6 * max(abs(fwd), abs(bwd)) + 1e-14:
            return True
    return False
