"""Camera-frame data -> normalized world-frame point maps and scene flows."""

from __future__ import annotations

from .core import SequenceSample, is_camera_tag
from .flowops import apply_deformability, flow_to_world
from .geomath import cam_to_world_points, normalize_poses, pyramid_pad
from .normalize import canonical_normalize, max_normalize

NORM_MODES = ("canonical", "max", "none")


def to_world(seq: SequenceSample, use_deformability: bool = True) -> SequenceSample:
    """Canonicalize poses on the first camera and move points and flows into that frame."""
    for pm in seq.point_maps:
        if not is_camera_tag(pm.frame_tag):
            raise ValueError(f"preprocessing expects camera-frame input, got {pm.frame_tag!r}")
    poses = normalize_poses(seq.poses)
    maps = [cam_to_world_points(pm, p) for pm, p in zip(seq.point_maps, poses)]
    flows = [
        flow_to_world(seq.point_maps[i], fl, poses[i], poses[i + 1])
        for i, fl in enumerate(seq.flows)
    ]
    if use_deformability and seq.deformability_masks is not None:
        flows = [apply_deformability(f, m) for f, m in zip(flows, seq.deformability_masks)]
    return seq.replace(point_maps=maps, flows=flows, poses=poses, norm=None)


def preprocess(
    seq: SequenceSample,
    norm: str = "canonical",
    pad: bool = False,
    use_deformability: bool = True,
) -> SequenceSample:
    """Pose canonicalization, world transform, global normalization, optional padding.

    Padding runs last so the filled values live in the same units as the
    valid points; the masks still mark them invalid.
    """
    if norm not in NORM_MODES:
        raise ValueError(f"unknown normalization {norm!r}; choose from {NORM_MODES}")
    out = to_world(seq, use_deformability)
    if norm == "canonical":
        out, _ = canonical_normalize(out)
    elif norm == "max":
        out, _ = max_normalize(out)
    if pad:
        out = out.replace(point_maps=[pyramid_pad(pm) for pm in out.point_maps])
    return out
