"""World-frame scene flow, deformed point maps and deformability masking."""

from __future__ import annotations

import numpy as np

from .core import WORLD, CameraPose, PointMap, SceneFlow, is_camera_tag


def flow_to_world(
    pm_cam: PointMap,
    flow_cam: SceneFlow,
    pose_i: CameraPose,
    pose_next: CameraPose,
) -> SceneFlow:
    """Convert a camera-frame flow into a world-frame flow.

    `flow_cam` follows the usual dataset convention: x + v is the tracked
    point expressed in the camera frame of i+1. The world flow is
    (R_{i+1}(x + v) + t_{i+1}) - (R_i x + t_i), so camera motion cancels.
    """
    if not is_camera_tag(pm_cam.frame_tag) or flow_cam.frame_tag != pm_cam.frame_tag:
        raise ValueError(
            f"frame tag mismatch: point map {pm_cam.frame_tag!r}, flow {flow_cam.frame_tag!r}"
        )
    if pm_cam.shape != flow_cam.shape:
        raise ValueError(f"shape mismatch: {pm_cam.shape} vs {flow_cam.shape}")
    x = pm_cam.data
    moved = pose_next.apply(x + flow_cam.data)
    here = pose_i.apply(x)
    mask = pm_cam.mask & flow_cam.mask
    return SceneFlow(np.where(mask[..., None], moved - here, 0.0), mask, WORLD)


def deform(pm: PointMap, flow: SceneFlow) -> PointMap:
    """Advect frame-i points to their frame-(i+1) positions (pixel-aligned with i)."""
    if pm.shape != flow.shape:
        raise ValueError(f"shape mismatch: {pm.shape} vs {flow.shape}")
    if pm.frame_tag != flow.frame_tag:
        raise ValueError(f"frame tag mismatch: {pm.frame_tag!r} vs {flow.frame_tag!r}")
    mask = pm.mask & flow.mask
    return PointMap(np.where(mask[..., None], pm.data + flow.data, 0.0), mask, pm.frame_tag)


def apply_deformability(flow: SceneFlow, dyn_mask: np.ndarray) -> SceneFlow:
    """Zero the flow wherever `dyn_mask` is False (True marks dynamic pixels)."""
    dyn_mask = np.asarray(dyn_mask, dtype=bool)
    if dyn_mask.shape != flow.shape:
        raise ValueError(f"shape mismatch: {dyn_mask.shape} vs {flow.shape}")
    return SceneFlow(np.where(dyn_mask[..., None], flow.data, 0.0), flow.mask, flow.frame_tag)
