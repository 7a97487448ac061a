"""File formats: network checkpoints, voxel fields, PNG and PFM rasters.

Network checkpoint layout::

    b"NPSV1\\n"
    one line of JSON describing the architecture
    little-endian float32 parameters, flattened in ``InrModel.parameters()`` order

The voxel field format is the same with magic ``NPRF1``: a JSON header with
resolution and bounds, then density followed by colour.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import UsageError
from .inr import ArchSpec, InrModel, init_model
from .radiance import VoxelRadianceField

MODEL_MAGIC = b"NPSV1\n"
FIELD_MAGIC = b"NPRF1\n"
_LE32 = np.dtype("<f4")


def _read_header(data: bytes, magic: bytes, path) -> tuple[dict, bytes]:
    if not data.startswith(magic):
        raise UsageError(f"{path}: not a {magic.strip().decode()} file")
    rest = data[len(magic):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise UsageError(f"{path}: truncated header")
    return json.loads(rest[:nl].decode("utf-8")), rest[nl + 1:]


def model_to_bytes(model: InrModel) -> bytes:
    header = json.dumps(model.arch.to_dict(), sort_keys=True).encode("utf-8")
    flat = np.concatenate([p.ravel() for p in model.parameters()]).astype(_LE32)
    return MODEL_MAGIC + header + b"\n" + flat.tobytes()


def model_from_bytes(data: bytes, path="<bytes>") -> InrModel:
    meta, payload = _read_header(data, MODEL_MAGIC, path)
    arch = ArchSpec.from_dict(meta)
    model = init_model(arch, seed=0)
    flat = np.frombuffer(payload, dtype=_LE32)
    if flat.size != model.num_parameters:
        raise UsageError(f"{path}: expected {model.num_parameters} parameters, found {flat.size}")
    arrays, at = [], 0
    for p in model.parameters():
        arrays.append(flat[at:at + p.size].reshape(p.shape).astype(np.float32))
        at += p.size
    model.set_parameters(arrays)
    return model


def save_model(model: InrModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> InrModel:
    return model_from_bytes(Path(path).read_bytes(), path)


def field_to_bytes(f: VoxelRadianceField) -> bytes:
    meta = {"resolution": list(f.resolution), "lo": f.lo.tolist(), "hi": f.hi.tolist()}
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    flat = np.concatenate([f.density.ravel(), f.color.ravel()]).astype(_LE32)
    return FIELD_MAGIC + header + b"\n" + flat.tobytes()


def field_from_bytes(data: bytes, path="<bytes>") -> VoxelRadianceField:
    meta, payload = _read_header(data, FIELD_MAGIC, path)
    res = tuple(int(r) for r in meta["resolution"])
    n = int(np.prod(res))
    flat = np.frombuffer(payload, dtype=_LE32)
    if flat.size != 4 * n:
        raise UsageError(f"{path}: expected {4 * n} values, found {flat.size}")
    den = flat[:n].reshape(res).astype(np.float32)
    col = flat[n:].reshape(*res, 3).astype(np.float32)
    return VoxelRadianceField(den, col, meta["lo"], meta["hi"])


def save_field(f: VoxelRadianceField, path) -> None:
    Path(path).write_bytes(field_to_bytes(f))


def load_field(path) -> VoxelRadianceField:
    return field_from_bytes(Path(path).read_bytes(), path)


def read_png(path) -> np.ndarray:
    """8-bit image as float64 RGB in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read image {path}: {exc}") from exc
    return arr / 255.0


def write_png(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(path, format="PNG")


def read_mask_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128


def write_pfm(path, image: np.ndarray) -> None:
    """Little-endian PFM; rows are stored bottom-to-top as the format requires."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        kind = b"PF"
    elif img.ndim == 2:
        kind = b"Pf"
    else:
        raise UsageError("PFM supports (H, W) or (H, W, 3) rasters")
    h, w = img.shape[:2]
    body = np.ascontiguousarray(img[::-1]).astype(_LE32).tobytes()
    Path(path).write_bytes(kind + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n" + body)


def read_pfm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] not in (b"PF", b"Pf"):
        raise UsageError(f"{path}: not a PFM file")
    w, h = (int(v) for v in parts[1].split())
    scale = float(parts[2])
    dt = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    c = 3 if parts[0] == b"PF" else 1
    arr = np.frombuffer(parts[3], dtype=dt, count=w * h * c).astype(np.float64)
    arr = arr.reshape(h, w, c)[::-1]
    return arr[:, :, 0].copy() if c == 1 else arr.copy()
