"""Rigid transforms, depth projection, surface normals and pyramid padding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    WORLD,
    WORLD_NORMALIZED,
    CameraIntrinsics,
    CameraPose,
    PointMap,
    _frozen,
    camera_tag,
    is_camera_tag,
)

DEPTH_MIN = 1e-9
NORMAL_MIN = 1e-12


@dataclass(frozen=True)
class DepthMap:
    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.float64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))


@dataclass(frozen=True)
class NormalMap:
    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.float64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))


def normalize_poses(poses: Sequence[CameraPose]) -> list[CameraPose]:
    """Express every pose relative to the first camera.

    R_i <- R_0^T R_i and t_i <- R_0^T (t_i - t_0), so the first output is the
    identity and relative motion between frames is preserved.
    """
    if len(poses) == 0:
        raise ValueError("normalize_poses needs at least one pose")
    r0t = poses[0].rotation.T
    t0 = poses[0].translation
    out = [CameraPose(r0t @ p.rotation, r0t @ (p.translation - t0)) for p in poses]
    # exact identity for the reference frame, free of rounding in R0^T R0
    out[0] = CameraPose.identity()
    return out


def _masked(data: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask[..., None], data, 0.0)


def cam_to_world_points(pm: PointMap, pose: CameraPose) -> PointMap:
    if not is_camera_tag(pm.frame_tag):
        raise ValueError(f"expected a camera-frame point map, got {pm.frame_tag!r}")
    return PointMap(_masked(pose.apply(pm.data), pm.mask), pm.mask, WORLD)


def world_to_cam_points(pm: PointMap, pose: CameraPose, index: int) -> PointMap:
    """Inverse of cam_to_world_points; `index` names the target camera frame."""
    if pm.frame_tag != WORLD:
        raise ValueError(f"expected a world-frame point map, got {pm.frame_tag!r}")
    return PointMap(_masked(pose.inverse().apply(pm.data), pm.mask), pm.mask, camera_tag(index))


def camera_depth(points: np.ndarray, pose: CameraPose) -> np.ndarray:
    """z-coordinate of world points in the camera frame, i.e. (R^T (x - t))_z."""
    return (points - pose.translation) @ pose.rotation[:, 2]


def project_depth(pm: PointMap, pose: CameraPose, K: Optional[CameraIntrinsics] = None) -> DepthMap:
    """Pixel-aligned depth of a world point map seen from `pose`.

    The point map shares the camera's pixel grid, so no resampling happens;
    K only fixes the expected image size.
    """
    if pm.frame_tag not in (WORLD, WORLD_NORMALIZED):
        raise ValueError(f"expected a world-frame point map, got {pm.frame_tag!r}")
    if K is not None and (K.height, K.width) != pm.shape:
        raise ValueError(f"intrinsics size {K.height}x{K.width} does not match point map {pm.shape}")
    z = camera_depth(pm.data, pose)
    mask = pm.mask & (z > DEPTH_MIN)
    return DepthMap(np.where(mask, z, 0.0), mask)


def normal_stencil(points: np.ndarray, mask: Optional[np.ndarray] = None):
    """Central-difference tangents and their unnormalized cross product.

    Returns (m, du, dv, valid) for the interior (H-2)x(W-2) pixels, where
    du = P[r, c+1] - P[r, c-1], dv = P[r+1, c] - P[r-1, c] and m = dv x du.
    The dv x du order makes a fronto-parallel surface face the camera (-z).
    """
    h, w = points.shape[:2]
    if h < 3 or w < 3:
        raise ValueError(f"normals need at least a 3x3 map, got {h}x{w}")
    du = points[1:-1, 2:] - points[1:-1, :-2]
    dv = points[2:, 1:-1] - points[:-2, 1:-1]
    m = np.cross(dv, du)
    valid = np.ones((h - 2, w - 2), dtype=bool)
    if mask is not None:
        valid = mask[1:-1, 2:] & mask[1:-1, :-2] & mask[2:, 1:-1] & mask[:-2, 1:-1] & mask[1:-1, 1:-1]
    valid &= np.linalg.norm(m, axis=-1) > NORMAL_MIN
    return m, du, dv, valid


def compute_normals(pm, mask: Optional[np.ndarray] = None) -> NormalMap:
    if isinstance(pm, PointMap):
        points = pm.data
        mask = pm.mask if mask is None else (mask & pm.mask)
    else:
        points = np.asarray(pm, dtype=np.float64)
    h, w = points.shape[:2]
    m, _, _, valid = normal_stencil(points, mask)
    norm = np.linalg.norm(m, axis=-1, keepdims=True)
    n = np.where(valid[..., None], m / np.where(norm > 0, norm, 1.0), 0.0)
    data = np.zeros((h, w, 3))
    full_mask = np.zeros((h, w), dtype=bool)
    data[1:-1, 1:-1] = n
    full_mask[1:-1, 1:-1] = valid
    return NormalMap(data, full_mask)


def _downsample(mean: np.ndarray, weight: np.ndarray):
    """One 2x pyramid step of a mask-weighted mean.

    The mean of each 2x2 block is taken relative to the block's smallest
    valid value so that a constant block reproduces its value exactly.
    """
    h, w = weight.shape
    ph, pw = h + h % 2, w + w % 2
    m = np.zeros((ph, pw, mean.shape[-1]))
    wt = np.zeros((ph, pw))
    m[:h, :w] = mean
    wt[:h, :w] = weight
    blocks_m = m.reshape(ph // 2, 2, pw // 2, 2, -1).transpose(0, 2, 1, 3, 4).reshape(ph // 2, pw // 2, 4, -1)
    blocks_w = wt.reshape(ph // 2, 2, pw // 2, 2).transpose(0, 2, 1, 3).reshape(ph // 2, pw // 2, 4)
    has = blocks_w > 0
    ref = np.min(np.where(has[..., None], blocks_m, np.inf), axis=2)
    total = blocks_w.sum(axis=2)
    ok = total > 0
    ref = np.where(ok[..., None], ref, 0.0)
    offset = np.sum(np.where(has[..., None], blocks_w[..., None] * (blocks_m - ref[:, :, None, :]), 0.0), axis=2)
    out = ref + offset / np.where(ok, total, 1.0)[..., None]
    return np.where(ok[..., None], out, 0.0), total


def pyramid_pad(pm: PointMap) -> PointMap:
    """Fill invalid pixels coarse-to-fine from a mask-weighted mean pyramid.

    Valid pixels are left untouched and the mask is unchanged; the fill is
    only meant to keep downstream feature extractors away from holes.
    """
    if not pm.mask.any():
        raise ValueError("pyramid_pad needs at least one valid pixel")
    if pm.mask.all():
        return pm
    h, w = pm.shape
    mean = np.where(pm.mask[..., None], pm.data, 0.0)
    weight = pm.mask.astype(np.float64)
    levels = []
    while weight.shape != (1, 1):
        mean, weight = _downsample(mean, weight)
        levels.append((mean, weight))

    out = np.array(pm.data)
    todo = ~pm.mask
    rows, cols = np.nonzero(todo)
    filled = np.zeros(rows.shape, dtype=bool)
    for k, (lm, lw) in enumerate(levels, start=1):
        r, c = rows >> k, cols >> k
        take = ~filled & (lw[r, c] > 0)
        out[rows[take], cols[take]] = lm[r[take], c[take]]
        filled |= take
        if filled.all():
            break
    return PointMap(out, pm.mask, pm.frame_tag)
