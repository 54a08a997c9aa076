"""Shared domain types for world-frame point maps and scene flows.

All containers are frozen dataclasses holding read-only float64 / bool
arrays. Invalid pixels carry the placeholder value 0.0 unless an operation
documents otherwise (pyramid padding).

Axis convention: the camera looks down +z, x points right, y points down.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

EPS = 1e-12
ORTHO_TOL = 1e-6

WORLD = "world"
WORLD_NORMALIZED = "world-normalized"


def camera_tag(i: int) -> str:
    return f"camera({i})"


def is_camera_tag(tag: str) -> bool:
    return tag.startswith("camera(") and tag.endswith(")")


def camera_index(tag: str) -> int:
    if not is_camera_tag(tag):
        raise ValueError(f"not a camera frame tag: {tag!r}")
    return int(tag[len("camera("):-1])


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float) -> "CameraIntrinsics":
        """Square-pixel pinhole with horizontal field of view `fov_deg`."""
        f = 0.5 * width / np.tan(np.deg2rad(fov_deg) / 2.0)
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def violations(self) -> list[str]:
        out = []
        if not (self.fx > 0 and self.fy > 0):
            out.append("intrinsics: focal lengths must be positive")
        if not (0 <= self.cx < self.width):
            out.append("intrinsics: cx outside [0, width)")
        if not (0 <= self.cy < self.height):
            out.append("intrinsics: cy outside [0, height)")
        return out


@dataclass(frozen=True)
class CameraPose:
    """Rigid camera-to-world transform x_world = R @ x_cam + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", _frozen(self.translation, np.float64).reshape(3))

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "CameraPose":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "CameraPose":
        rt = self.rotation.T
        return CameraPose(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (..., 3) points from the source frame to the target frame."""
        return points @ self.rotation.T + self.translation

    def violations(self) -> list[str]:
        r = self.rotation
        out = []
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(self.translation)):
            out.append("non-finite entries")
            return out
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL:
            out.append("rotation not orthonormal")
        elif abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            out.append("rotation determinant is not +1")
        return out


@dataclass(frozen=True)
class PointMap:
    data: np.ndarray
    mask: np.ndarray
    frame_tag: str = WORLD

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.float64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def valid_points(self) -> np.ndarray:
        return self.data[self.mask]

    def violations(self) -> list[str]:
        out = []
        if self.data.ndim != 3 or self.data.shape[-1] != 3:
            out.append(f"data must be HxWx3, got {self.data.shape}")
        elif self.data.shape[:2] != self.mask.shape:
            out.append("data and mask disagree on HxW")
        if not np.all(np.isfinite(self.data)):
            out.append("non-finite values")
        return out


@dataclass(frozen=True)
class SceneFlow:
    """Per-pixel forward motion vectors from frame i to frame i+1."""

    data: np.ndarray
    mask: np.ndarray
    frame_tag: str = WORLD

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.float64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def violations(self) -> list[str]:
        out = []
        if self.data.ndim != 3 or self.data.shape[-1] != 3:
            out.append(f"data must be HxWx3, got {self.data.shape}")
            return out
        if self.data.shape[:2] != self.mask.shape:
            out.append("data and mask disagree on HxW")
            return out
        if not np.all(np.isfinite(self.data)):
            out.append("non-finite values")
        elif np.any(self.data[~self.mask] != 0.0):
            out.append("masked-out entries are not zero")
        return out


@dataclass(frozen=True)
class NormParams:
    mu: np.ndarray
    scale: float
    mode: str = "canonical"

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen(self.mu, np.float64).reshape(3))
        object.__setattr__(self, "scale", float(self.scale))
        if self.mode not in ("canonical", "max"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")


@dataclass(frozen=True)
class SequenceSample:
    point_maps: tuple[PointMap, ...]
    flows: tuple[SceneFlow, ...]
    poses: tuple[CameraPose, ...]
    intrinsics: CameraIntrinsics
    deformability_masks: Optional[tuple[np.ndarray, ...]] = None
    norm: Optional[NormParams] = None

    def __post_init__(self):
        object.__setattr__(self, "point_maps", tuple(self.point_maps))
        object.__setattr__(self, "flows", tuple(self.flows))
        object.__setattr__(self, "poses", tuple(self.poses))
        if self.deformability_masks is not None:
            masks = tuple(_frozen(m, bool) for m in self.deformability_masks)
            object.__setattr__(self, "deformability_masks", masks)

    @property
    def frames(self) -> int:
        return len(self.point_maps)

    @property
    def shape(self) -> tuple[int, int]:
        return self.point_maps[0].shape

    @property
    def frame_tag(self) -> str:
        """Sequence-level tag; camera sequences report the generic "camera"."""
        tag = self.point_maps[0].frame_tag
        return "camera" if is_camera_tag(tag) else tag

    def replace(self, **changes) -> "SequenceSample":
        return replace(self, **changes)


def validate_sequence(seq: SequenceSample) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    out: list[str] = []
    n = seq.frames
    if n < 2:
        out.append(f"frames: need at least 2 frames, got {n}")
    if len(seq.flows) != n - 1:
        out.append(f"flows: flow count must be N-1={n - 1}, got {len(seq.flows)}")
    if len(seq.poses) != n:
        out.append(f"poses: pose count must be N={n}, got {len(seq.poses)}")
    hw = (seq.intrinsics.height, seq.intrinsics.width)

    for i, pm in enumerate(seq.point_maps):
        for v in pm.violations():
            out.append(f"point_maps[{i}]: {v}")
        if pm.shape != hw:
            out.append(f"point_maps[{i}]: shape {pm.shape} differs from image size {hw}")
        if is_camera_tag(pm.frame_tag) and camera_index(pm.frame_tag) != i:
            out.append(f"point_maps[{i}]: frame_tag {pm.frame_tag} does not match index")
    for i, fl in enumerate(seq.flows):
        for v in fl.violations():
            out.append(f"flows[{i}]: {v}")
        if fl.shape != hw:
            out.append(f"flows[{i}]: shape {fl.shape} differs from image size {hw}")
    for i, pose in enumerate(seq.poses):
        for v in pose.violations():
            out.append(f"poses[{i}]: {v}")

    out.extend(seq.intrinsics.violations())

    if seq.deformability_masks is not None:
        if len(seq.deformability_masks) != n - 1:
            out.append(f"deformability_masks: count must be N-1={n - 1}, got {len(seq.deformability_masks)}")
        for i, m in enumerate(seq.deformability_masks):
            if m.shape != hw:
                out.append(f"deformability_masks[{i}]: shape {m.shape} differs from image size {hw}")
    if seq.norm is not None and not seq.norm.scale >= EPS:
        out.append(f"norm: scale {seq.norm.scale} below epsilon")
    return out

