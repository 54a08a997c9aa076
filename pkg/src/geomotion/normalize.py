"""Sequence-level normalization of world-frame geometry and motion.

Canonical normalization centers all valid points of a sequence on their
centroid and divides by the mean centroid distance (plus EPS). Point maps,
pose translations and flows share the same affine map; flows only scale.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import (
    EPS,
    WORLD,
    WORLD_NORMALIZED,
    CameraPose,
    NormParams,
    PointMap,
    SceneFlow,
    SequenceSample,
)


def _pooled_points(seq: SequenceSample) -> np.ndarray:
    for pm in seq.point_maps:
        if pm.frame_tag != WORLD:
            raise ValueError(f"normalization expects world-frame point maps, got {pm.frame_tag!r}")
    pts = np.concatenate([pm.valid_points() for pm in seq.point_maps])
    if len(pts) == 0:
        raise ValueError("sequence has no valid points")
    return pts


def _mean(pts: np.ndarray) -> np.ndarray:
    # second pass removes the rounding error of large common offsets
    mu = pts.mean(axis=0)
    return mu + (pts - mu).mean(axis=0)


def transform_sequence(
    seq: SequenceSample,
    scale: float,
    offset: np.ndarray,
    frame_tag: Optional[str] = None,
    norm=None,
) -> SequenceSample:
    """Apply x -> scale * x + offset to points and pose centers, v -> scale * v to flows.

    Invalid pixels keep the 0.0 placeholder. Rotations are untouched. With
    `frame_tag` None every map keeps its own tag.
    """
    offset = np.asarray(offset, dtype=np.float64)

    def points(pm: PointMap) -> PointMap:
        data = np.where(pm.mask[..., None], scale * pm.data + offset, 0.0)
        return PointMap(data, pm.mask, frame_tag or pm.frame_tag)

    def flow(fl: SceneFlow) -> SceneFlow:
        return SceneFlow(np.where(fl.mask[..., None], scale * fl.data, 0.0), fl.mask, frame_tag or fl.frame_tag)

    poses = [CameraPose(p.rotation, scale * p.translation + offset) for p in seq.poses]
    return seq.replace(
        point_maps=[points(pm) for pm in seq.point_maps],
        flows=[flow(f) for f in seq.flows],
        poses=poses,
        norm=norm,
    )


def _normalized(seq: SequenceSample, mu: np.ndarray, scale: float, mode: str):
    params = NormParams(mu, scale, mode)
    data_maps = [
        PointMap(np.where(pm.mask[..., None], (pm.data - mu) / scale, 0.0), pm.mask, WORLD_NORMALIZED)
        for pm in seq.point_maps
    ]
    flows = [
        SceneFlow(np.where(fl.mask[..., None], fl.data / scale, 0.0), fl.mask, WORLD_NORMALIZED)
        for fl in seq.flows
    ]
    poses = [CameraPose(p.rotation, (p.translation - mu) / scale) for p in seq.poses]
    return seq.replace(point_maps=data_maps, flows=flows, poses=poses, norm=params), params


def canonical_normalize(seq: SequenceSample, eps: float = EPS) -> tuple[SequenceSample, NormParams]:
    pts = _pooled_points(seq)
    mu = _mean(pts)
    scale = float(np.mean(np.linalg.norm(pts - mu, axis=1))) + eps
    return _normalized(seq, mu, scale, "canonical")


def max_normalize(seq: SequenceSample, eps: float = EPS) -> tuple[SequenceSample, NormParams]:
    """Bounding-box rescale into [-1, 1] (the max-normalization baseline).

    Centers on the midpoint of the valid-point bounding box and divides by
    half of its largest extent.
    """
    pts = _pooled_points(seq)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    scale = 0.5 * float(np.max(hi - lo)) + eps
    return _normalized(seq, center, scale, "max")


def denormalize(seq: SequenceSample, params: NormParams) -> SequenceSample:
    for pm in seq.point_maps:
        if pm.frame_tag != WORLD_NORMALIZED:
            raise ValueError(f"expected a normalized sequence, got {pm.frame_tag!r}")
    return transform_sequence(seq, params.scale, params.mu, WORLD, norm=None)


def canonical_denormalize(seq: SequenceSample, params: NormParams) -> SequenceSample:
    if params.mode != "canonical":
        raise ValueError(f"canonical_denormalize got {params.mode!r} parameters")
    return denormalize(seq, params)
