"""Procedural dynamic scenes with exact ground truth.

Scenes are built from analytic primitives (planes, oriented boxes, spheres)
and ray cast at pixel centers, so point maps and flows carry no
discretization error. Static primitives never move; movers translate and
spin at constant per-frame rates.

The scene's native world frame uses the same axes as the cameras (y down),
so "up" is -y and the ground plane is y = ground_y.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial.transform import Rotation

from .core import (
    EPS,
    WORLD,
    WORLD_NORMALIZED,
    CameraIntrinsics,
    CameraPose,
    NormParams,
    PointMap,
    SceneFlow,
    SequenceSample,
    camera_tag,
)
from .normalize import transform_sequence

HIT_MIN = 1e-6


@dataclass(frozen=True)
class Plane:
    point: tuple
    normal: tuple


@dataclass(frozen=True)
class Box:
    center: tuple
    half_extents: tuple
    rotvec: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float


Shape = Union[Plane, Box, Sphere]


@dataclass(frozen=True)
class Mover:
    """A rigid box or sphere with constant velocity and spin (per frame)."""

    shape: Union[Box, Sphere]
    velocity: tuple = (0.0, 0.0, 0.0)
    angular_velocity: tuple = (0.0, 0.0, 0.0)

    def pose_at(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(center, orientation) at frame i."""
        c0 = np.asarray(self.shape.center, dtype=np.float64)
        r0 = Rotation.from_rotvec(getattr(self.shape, "rotvec", (0.0, 0.0, 0.0))).as_matrix()
        spin = Rotation.from_rotvec(i * np.asarray(self.angular_velocity, dtype=np.float64)).as_matrix()
        return c0 + i * np.asarray(self.velocity, dtype=np.float64), spin @ r0

    def step(self) -> np.ndarray:
        return Rotation.from_rotvec(np.asarray(self.angular_velocity, dtype=np.float64)).as_matrix()

    def advance(self, points: np.ndarray, i: int) -> np.ndarray:
        """Carry body points from their frame-i to their frame-(i+1) positions."""
        c, _ = self.pose_at(i)
        return c + np.asarray(self.velocity) + (points - c) @ self.step().T


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 64
    frames: int = 8
    trajectory: str = "orbit"
    fov_deg: float = 60.0
    orbit_radius: float = 7.0
    orbit_span_deg: float = 40.0
    camera_height: float = 2.5
    dolly_step: float = 0.25
    ground_y: float = 1.0
    background: tuple = ()
    movers: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError("a scene needs at least 2 frames")
        if self.height < 1 or self.width < 1:
            raise ValueError("resolution must be positive")
        if self.trajectory not in ("orbit", "dolly", "static"):
            raise ValueError(f"unknown trajectory {self.trajectory!r}")
        if not self.background:
            raise ValueError("at least one background primitive is required")
        for m in self.movers:
            if not (np.all(np.isfinite(m.velocity)) and np.all(np.isfinite(m.angular_velocity))):
                raise ValueError("mover velocities must be finite")

    @classmethod
    def random(
        cls,
        seed: int = 0,
        n_boxes: int = 3,
        n_movers: int = 2,
        mover_speed: float = 0.15,
        mover_spin_deg: float = 6.0,
        **overrides,
    ) -> "SceneConfig":
        """Finite floor slab plus random static boxes and random movers."""
        rng = np.random.default_rng(seed)
        ground_y = overrides.get("ground_y", 1.0)
        background: list = [Box((0.0, ground_y + 0.05, 0.0), (6.0, 0.05, 6.0))]
        for _ in range(n_boxes):
            half = rng.uniform(0.3, 0.8, 3)
            x, z = rng.uniform(-3.0, 3.0, 2)
            background.append(Box((x, ground_y - half[1], z), tuple(half), (0.0, rng.uniform(-np.pi, np.pi), 0.0)))
        movers = []
        for k in range(n_movers):
            x, z = rng.uniform(-1.5, 1.5, 2)
            heading = rng.uniform(-np.pi, np.pi)
            vel = mover_speed * np.array([np.cos(heading), rng.uniform(-0.2, 0.2), np.sin(heading)])
            axis = rng.normal(size=3)
            spin = np.deg2rad(mover_spin_deg) * axis / np.linalg.norm(axis)
            if k % 2 == 0:
                half = rng.uniform(0.3, 0.6, 3)
                shape: Union[Box, Sphere] = Box(
                    (x, ground_y - half[1] - 0.5, z), tuple(half), tuple(rng.normal(size=3) * 0.5))
            else:
                r = rng.uniform(0.35, 0.7)
                shape = Sphere((x, ground_y - r - 0.5, z), r)
            movers.append(Mover(shape, tuple(vel), tuple(spin)))
        return cls(background=tuple(background), movers=tuple(movers), seed=seed, **overrides)


# keys accepted by the text config; the geometry is drawn by SceneConfig.random
TEXT_KEYS = {
    "height": int, "width": int, "frames": int, "trajectory": str,
    "fov_deg": float, "orbit_radius": float, "orbit_span_deg": float,
    "camera_height": float, "dolly_step": float, "ground_y": float,
    "n_boxes": int, "n_movers": int, "mover_speed": float, "mover_spin_deg": float,
    "seed": int,
}


def parse_config_text(text: str, seed: Optional[int] = None) -> SceneConfig:
    """Parse `key = value` lines ('#' starts a comment) into a random scene config."""
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in TEXT_KEYS:
            raise ValueError(f"config line {lineno}: unrecognized entry {raw.strip()!r}")
        kv[key] = TEXT_KEYS[key](val.strip())
    if seed is not None:
        kv["seed"] = seed
    return SceneConfig.random(**kv)


def look_at(position, target) -> CameraPose:
    """Camera-to-world pose at `position` looking at `target`, image y toward world +y."""
    position = np.asarray(position, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - position
    fwd /= np.linalg.norm(fwd)
    right = np.cross([0.0, 1.0, 0.0], fwd)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return CameraPose(np.stack([right, down, fwd], axis=1), position)


def camera_trajectory(config: SceneConfig) -> list[CameraPose]:
    n = config.frames
    target = np.array([0.0, 0.0, 0.0])
    poses = []
    for i in range(n):
        if config.trajectory == "dolly":
            pos = np.array([0.0, -config.camera_height, -config.orbit_radius + i * config.dolly_step])
            poses.append(look_at(pos, pos + np.array([0.0, config.camera_height / config.orbit_radius, 1.0])))
            continue
        if config.trajectory == "static":
            theta = 0.0
        else:
            theta = np.deg2rad(config.orbit_span_deg * (i / (n - 1) - 0.5))
        pos = np.array([config.orbit_radius * np.sin(theta), -config.camera_height,
                        -config.orbit_radius * np.cos(theta)])
        poses.append(look_at(pos, target))
    return poses


def pixel_rays(K: CameraIntrinsics) -> np.ndarray:
    """Camera-frame ray directions through pixel centers, normalized to z = 1."""
    rows, cols = np.meshgrid(np.arange(K.height, dtype=np.float64), np.arange(K.width, dtype=np.float64),
                             indexing="ij")
    return np.stack([(cols - K.cx) / K.fx, (rows - K.cy) / K.fy, np.ones_like(rows)], axis=-1)


def _hit_plane(o, d, plane: Plane) -> np.ndarray:
    n = np.asarray(plane.normal, dtype=np.float64)
    denom = d @ n
    num = (np.asarray(plane.point) - o) @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = num / denom
    return np.where((np.abs(denom) > 1e-12) & (lam > HIT_MIN), lam, np.inf)


def _hit_sphere(o, d, center, radius) -> np.ndarray:
    oc = o - center
    a = np.sum(d * d, axis=-1)
    b = d @ oc
    c = oc @ oc - radius * radius
    disc = b * b - a * c
    root = np.sqrt(np.maximum(disc, 0.0))
    near = (-b - root) / a
    far = (-b + root) / a
    lam = np.where(near > HIT_MIN, near, far)
    return np.where((disc >= 0) & (lam > HIT_MIN), lam, np.inf)


def _hit_box(o, d, center, rot, half) -> np.ndarray:
    ol = rot.T @ (o - center)
    dl = d @ rot
    half = np.asarray(half, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dl
        t1 = (-half - ol) * inv
        t2 = (half - ol) * inv
    lo = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    hi = np.where(np.isnan(t1), np.inf, np.maximum(t1, t2))
    # rays parallel to a slab and outside it never hit
    outside = (dl == 0) & (np.abs(ol) > half)
    tnear = lo.max(axis=-1)
    tfar = hi.min(axis=-1)
    lam = np.where(tnear > HIT_MIN, tnear, tfar)
    ok = (tnear <= tfar) & (lam > HIT_MIN) & ~outside.any(axis=-1)
    return np.where(ok, lam, np.inf)


def _hit(o, d, shape: Shape, center=None, rot=None) -> np.ndarray:
    if isinstance(shape, Plane):
        return _hit_plane(o, d, shape)
    if center is None:
        center = np.asarray(shape.center, dtype=np.float64)
    if isinstance(shape, Sphere):
        return _hit_sphere(o, d, center, shape.radius)
    if rot is None:
        rot = Rotation.from_rotvec(shape.rotvec).as_matrix()
    return _hit_box(o, d, center, rot, shape.half_extents)


@dataclass
class SceneData:
    """Everything `generate` knows about a scene.

    camera: camera-frame point maps and flows with the raw (native) poses.
    world_metric: first-camera world frame, metric units.
    world: world_metric after canonical normalization.
    labels: per-frame primitive index hit by each pixel (-1 for misses);
        background primitives come first, then movers.
    next_world: analytic frame-(i+1) positions of the points seen at frame i,
        in the normalized world frame (the deformation oracle).
    """

    config: SceneConfig
    camera: SequenceSample
    world_metric: SequenceSample
    world: SequenceSample
    labels: np.ndarray
    next_world: list = field(default_factory=list)

    @property
    def n_background(self) -> int:
        return len(self.config.background)


def generate(config: SceneConfig) -> SceneData:
    K = CameraIntrinsics.from_fov(config.width, config.height, config.fov_deg)
    poses = camera_trajectory(config)
    rays = pixel_rays(K)
    nb = len(config.background)
    h, w, n = config.height, config.width, config.frames

    hits, labels, nexts = [], [], []
    for i, pose in enumerate(poses):
        d = rays @ pose.rotation.T
        o = pose.translation
        lams = [_hit(o, d, s) for s in config.background]
        for m in config.movers:
            c, r = m.pose_at(i)
            lams.append(_hit(o, d, m.shape, c, r))
        lam = np.stack(lams, axis=-1)
        label = np.argmin(lam, axis=-1)
        best = np.take_along_axis(lam, label[..., None], axis=-1)[..., 0]
        valid = np.isfinite(best)
        if not valid.any():
            raise ValueError(f"no visible geometry in frame {i}")
        label = np.where(valid, label, -1)
        x = np.where(valid[..., None], o + best[..., None] * d, 0.0)
        nxt = x.copy()
        for k, m in enumerate(config.movers):
            sel = label == nb + k
            nxt[sel] = m.advance(x[sel], i)
        hits.append(x)
        labels.append(label)
        nexts.append(nxt)

    # camera-frame data as a dataset would ship it
    cam_maps, cam_flows, dyn = [], [], []
    for i, pose in enumerate(poses):
        valid = labels[i] >= 0
        inv = pose.inverse()
        cam_maps.append(PointMap(np.where(valid[..., None], inv.apply(hits[i]), 0.0), valid, camera_tag(i)))
        if i + 1 < n:
            v = poses[i + 1].inverse().apply(nexts[i]) - inv.apply(hits[i])
            cam_flows.append(SceneFlow(np.where(valid[..., None], v, 0.0), valid, camera_tag(i)))
            dyn.append(labels[i] >= nb)
    camera = SequenceSample(cam_maps, cam_flows, poses, K, deformability_masks=dyn)

    # first-camera frame via homogeneous matrices
    to_first = np.linalg.inv(poses[0].matrix())

    def first(p):
        return p @ to_first[:3, :3].T + to_first[:3, 3]

    w_maps, w_flows, w_next = [], [], []
    for i in range(n):
        valid = labels[i] >= 0
        xw = first(hits[i])
        w_maps.append(PointMap(np.where(valid[..., None], xw, 0.0), valid, WORLD))
        if i + 1 < n:
            nw = first(nexts[i])
            w_next.append(np.where(valid[..., None], nw, 0.0))
            w_flows.append(SceneFlow(np.where(valid[..., None], nw - xw, 0.0), valid, WORLD))
    w_poses = [CameraPose.from_matrix(to_first @ p.matrix()) for p in poses]
    w_poses[0] = CameraPose.identity()
    world_metric = SequenceSample(w_maps, w_flows, w_poses, K, deformability_masks=dyn)

    pts = np.concatenate([pm.data[pm.mask] for pm in w_maps])
    mu = pts.mean(axis=0)
    mu = mu + (pts - mu).mean(axis=0)
    scale = float(np.mean(np.linalg.norm(pts - mu, axis=1))) + EPS
    world = world_metric.replace(
        point_maps=[PointMap(np.where(pm.mask[..., None], (pm.data - mu) / scale, 0.0), pm.mask, WORLD_NORMALIZED)
                    for pm in w_maps],
        flows=[SceneFlow(np.where(f.mask[..., None], f.data / scale, 0.0), f.mask, WORLD_NORMALIZED)
               for f in w_flows],
        poses=[CameraPose(p.rotation, (p.translation - mu) / scale) for p in w_poses],
        norm=NormParams(mu, scale, "canonical"),
    )
    next_world = [np.where(w_maps[i].mask[..., None], (nx - mu) / scale, 0.0) for i, nx in enumerate(w_next)]
    return SceneData(config, camera, world_metric, world, np.stack(labels), next_world)


@dataclass(frozen=True)
class NoiseSpec:
    point_sigma: float = 0.0
    flow_sigma: float = 0.0
    flow_jitter_deg: float = 0.0
    scale: float = 1.0
    shift: tuple = (0.0, 0.0, 0.0)


def _rotate_vectors(v: np.ndarray, rotvecs: np.ndarray) -> np.ndarray:
    flat = v.reshape(-1, 3)
    return Rotation.from_rotvec(rotvecs.reshape(-1, 3)).apply(flat).reshape(v.shape)


def perturb(seq: SequenceSample, noise: NoiseSpec, seed: int = 0) -> SequenceSample:
    """Fabricate a "prediction": gaussian point/flow noise, flow direction jitter,
    then a global similarity x -> scale * x + shift (flows scale only)."""
    rng = np.random.default_rng(seed)
    maps, flows = [], []
    for pm in seq.point_maps:
        data = pm.data
        if noise.point_sigma > 0:
            data = np.where(pm.mask[..., None], data + rng.normal(0.0, noise.point_sigma, data.shape), 0.0)
        maps.append(PointMap(data, pm.mask, pm.frame_tag))
    for fl in seq.flows:
        data = fl.data
        if noise.flow_jitter_deg > 0:
            axes = rng.normal(size=data.shape)
            axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
            angles = np.deg2rad(noise.flow_jitter_deg) * rng.normal(size=data.shape[:2])
            data = _rotate_vectors(data, axes * angles[..., None])
        if noise.flow_sigma > 0:
            data = data + rng.normal(0.0, noise.flow_sigma, data.shape)
        flows.append(SceneFlow(np.where(fl.mask[..., None], data, 0.0), fl.mask, fl.frame_tag))
    out = seq.replace(point_maps=maps, flows=flows)
    if noise.scale != 1.0 or any(noise.shift):
        out = transform_sequence(out, noise.scale, np.asarray(noise.shift, dtype=np.float64), norm=seq.norm)
    return out

