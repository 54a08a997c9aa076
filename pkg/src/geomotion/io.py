"""On-disk tensor files and sequence directories.

A tensor file is the 4-byte magic ``4DK1`` followed by little-endian u32
fields (dtype code, rank, dims...) and a row-major little-endian payload.
Dtype code 1 is float32, 2 is uint8 holding booleans. See FORMATS.md.

A sequence directory holds ``manifest.txt`` plus one tensor file per role
and frame. Values are float32 on disk and float64 in memory.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .core import (
    CameraIntrinsics,
    CameraPose,
    NormParams,
    PointMap,
    SceneFlow,
    SequenceSample,
    camera_tag,
)

MAGIC = b"4DK1"
DTYPE_F32 = 1
DTYPE_BOOL = 2
_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_BOOL: np.dtype("u1")}
MANIFEST = "manifest.txt"
FORMAT_NAME = "4dk-sequence"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


class FormatError(ValueError):
    """Base class for unreadable files; `code` is a stable identifier."""

    code = "format"

    def __init__(self, message: str):
        super().__init__(f"[{self.code}] {message}")


class BadMagicError(FormatError):
    code = "bad-magic"


class BadDtypeError(FormatError):
    code = "bad-dtype"


class HeaderError(FormatError):
    code = "bad-header"


class PayloadLengthError(FormatError):
    code = "payload-length"


class DimMismatchError(FormatError):
    code = "dim-mismatch"


class MissingFileError(FormatError):
    code = "missing-file"


class FlowCountError(FormatError):
    code = "flow-count"


class ManifestError(FormatError):
    code = "bad-manifest"


# ---------------------------------------------------------------------------
# tensor files


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype == bool:
        code, payload = DTYPE_BOOL, arr.astype("u1")
    else:
        code, payload = DTYPE_F32, arr.astype("<f4")
    header = MAGIC + struct.pack(f"<II{arr.ndim}I", code, arr.ndim, *arr.shape)
    return header + np.ascontiguousarray(payload).tobytes()


def decode_tensor(buf: bytes, name: str = "<buffer>") -> np.ndarray:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise BadMagicError(f"{name}: missing 4DK1 magic")
    code, rank = struct.unpack_from("<II", buf, 4)
    if code not in _DTYPES:
        raise BadDtypeError(f"{name}: unknown dtype code {code}")
    if len(buf) < 12 + 4 * rank:
        raise HeaderError(f"{name}: truncated header for rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", buf, 12)
    dtype = _DTYPES[code]
    offset = 12 + 4 * rank
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buf) - offset != expected:
        raise PayloadLengthError(f"{name}: payload length mismatch (expected {expected} bytes, got {len(buf) - offset})")
    arr = np.frombuffer(buf, dtype=dtype, offset=offset).reshape(dims)
    if code == DTYPE_BOOL:
        if np.any(arr > 1):
            raise BadDtypeError(f"{name}: boolean payload holds values other than 0/1")
        return arr.astype(bool)
    return arr.astype(np.float64)


def write_tensor(path: PathLike, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def read_tensor(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"{path}: no such file")
    return decode_tensor(path.read_bytes(), str(path))


# ---------------------------------------------------------------------------
# sequence directories


def _name(role: str, i: int) -> str:
    return f"{role}_{i:04d}.4dk"


def _format_manifest(kv: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in kv.items())


def parse_key_values(text: str) -> dict[str, str]:
    kv = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ManifestError(f"malformed line {raw!r}")
        kv[key.strip()] = val.strip()
    return kv


def write_sequence(seq: SequenceSample, path: PathLike) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for role in ("pointmap", "mask", "flow", "flowmask", "pose", "dynmask"):
        for stale in path.glob(f"{role}_*.4dk"):
            stale.unlink()
    h, w = seq.shape
    K = seq.intrinsics
    kv = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "frames": seq.frames,
        "height": h,
        "width": w,
        "frame_tag": seq.frame_tag,
        "image_width": K.width,
        "image_height": K.height,
        "deformability": int(seq.deformability_masks is not None),
        "norm_mode": "none" if seq.norm is None else seq.norm.mode,
    }
    if seq.norm is not None:
        # repr keeps the float64 values bit-exact
        kv.update({
            "norm_mu_x": repr(float(seq.norm.mu[0])),
            "norm_mu_y": repr(float(seq.norm.mu[1])),
            "norm_mu_z": repr(float(seq.norm.mu[2])),
            "norm_scale": repr(float(seq.norm.scale)),
        })
    kv["roles"] = "pointmap,mask,flow,flowmask,pose,intrinsics" + (",dynmask" if seq.deformability_masks is not None else "")
    (path / MANIFEST).write_text(_format_manifest(kv))

    write_tensor(path / "intrinsics.4dk", np.array([K.fx, K.fy, K.cx, K.cy]))
    for i, pm in enumerate(seq.point_maps):
        write_tensor(path / _name("pointmap", i), pm.data)
        write_tensor(path / _name("mask", i), pm.mask)
        write_tensor(path / _name("pose", i), seq.poses[i].matrix())
    for i, fl in enumerate(seq.flows):
        write_tensor(path / _name("flow", i), fl.data)
        write_tensor(path / _name("flowmask", i), fl.mask)
    if seq.deformability_masks is not None:
        for i, m in enumerate(seq.deformability_masks):
            write_tensor(path / _name("dynmask", i), m)


def _expect_shape(arr: np.ndarray, shape: tuple, name: str) -> np.ndarray:
    if arr.shape != shape:
        raise DimMismatchError(f"{name}: expected dims {shape}, got {arr.shape}")
    return arr


def read_sequence(path: PathLike) -> SequenceSample:
    path = Path(path)
    manifest = path / MANIFEST
    if not manifest.is_file():
        raise MissingFileError(f"{manifest}: no such file")
    kv = parse_key_values(manifest.read_text())
    if kv.get("format") != FORMAT_NAME:
        raise ManifestError(f"{manifest}: not a {FORMAT_NAME} manifest")
    try:
        n, h, w = int(kv["frames"]), int(kv["height"]), int(kv["width"])
        tag = kv["frame_tag"]
        width, height = int(kv["image_width"]), int(kv["image_height"])
        has_dyn = kv.get("deformability", "0") == "1"
        mode = kv.get("norm_mode", "none")
        norm = None
        if mode != "none":
            mu = [float(kv[f"norm_mu_{a}"]) for a in "xyz"]
            norm = NormParams(mu, float(kv["norm_scale"]), mode)
    except (KeyError, ValueError) as exc:
        raise ManifestError(f"{manifest}: {exc}") from None

    flow_files = sorted(path.glob("flow_*.4dk"))
    if len(flow_files) != n - 1:
        raise FlowCountError(f"{path}: manifest declares {n} frames, so {n - 1} flow files are required; found {len(flow_files)}")
    map_files = sorted(path.glob("pointmap_*.4dk"))
    if len(map_files) > n:
        raise ManifestError(f"{path}: manifest declares {n} frames, found {len(map_files)} point maps")

    intr = _expect_shape(read_tensor(path / "intrinsics.4dk"), (4,), "intrinsics")
    K = CameraIntrinsics(*(float(x) for x in intr), width, height)

    def frame_tag(i: int) -> str:
        return camera_tag(i) if tag == "camera" else tag

    maps, flows, poses, dyn = [], [], [], []
    for i in range(n):
        data = _expect_shape(read_tensor(path / _name("pointmap", i)), (h, w, 3), _name("pointmap", i))
        mask = _expect_shape(read_tensor(path / _name("mask", i)), (h, w), _name("mask", i))
        maps.append(PointMap(data, mask, frame_tag(i)))
        poses.append(CameraPose.from_matrix(_expect_shape(read_tensor(path / _name("pose", i)), (4, 4), _name("pose", i))))
    for i in range(n - 1):
        data = _expect_shape(read_tensor(path / _name("flow", i)), (h, w, 3), _name("flow", i))
        mask = _expect_shape(read_tensor(path / _name("flowmask", i)), (h, w), _name("flowmask", i))
        flows.append(SceneFlow(data, mask, frame_tag(i)))
        if has_dyn:
            dyn.append(_expect_shape(read_tensor(path / _name("dynmask", i)), (h, w), _name("dynmask", i)))
    return SequenceSample(maps, flows, poses, K, deformability_masks=dyn if has_dyn else None, norm=norm)


def quantize(seq: SequenceSample) -> SequenceSample:
    """Round every float array through float32, i.e. what a disk round trip keeps."""

    def q(a):
        return np.asarray(a, dtype=np.float32).astype(np.float64)

    K = seq.intrinsics
    return seq.replace(
        point_maps=[PointMap(q(pm.data), pm.mask, pm.frame_tag) for pm in seq.point_maps],
        flows=[SceneFlow(q(f.data), f.mask, f.frame_tag) for f in seq.flows],
        poses=[CameraPose.from_matrix(q(p.matrix())) for p in seq.poses],
        intrinsics=CameraIntrinsics(*(float(x) for x in q([K.fx, K.fy, K.cx, K.cy])), K.width, K.height),
    )

