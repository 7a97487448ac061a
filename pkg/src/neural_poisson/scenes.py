"""Scene descriptions: 2D blend bundles and procedural radiance scenes.

Both are small TOML files.  A 2D bundle::

    name = "ramp"
    source = "source.png"
    target = "target.png"
    offset = [-8, 6]          # target pixel (r, c) lands on source (r + dy, c + dx)
    lambda = 1.0
    mode = "max"
    [mask]
    rect = [46, 46, 82, 82]   # x0, y0, x1, y1 (exclusive), or: raster = "mask.png"

A radiance scene lists primitives for the source and target fields, the
region box and the camera shell; see ``load_radiance_scene``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli
from scipy import ndimage

from .classical import MaskRegion
from .errors import ConfigError, UsageError
from .guidance import GuidanceMode
from .io import read_mask_png, read_png
from .radiance import RoiBox, VoxelRadianceField

BUNDLED_SCENES = ("ramp", "edge", "textured")


def data_dir() -> Path:
    return Path(str(resources.files("neural_poisson") / "data"))


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"scene file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class SceneBundle:
    name: str
    source_path: Path
    target_path: Path
    mask_rect: tuple[int, int, int, int] | None = None
    mask_path: Path | None = None
    offset: tuple[int, int] = (0, 0)
    lam: float = 1.0
    mode: GuidanceMode = field(default_factory=lambda: GuidanceMode("max"))

    def __post_init__(self):
        for p in (self.source_path, self.target_path, self.mask_path):
            if p is not None and not Path(p).is_file():
                raise UsageError(f"scene {self.name!r}: missing file {p}")
        if (self.mask_rect is None) == (self.mask_path is None):
            raise ConfigError(f"scene {self.name!r}: give exactly one of mask rect or raster")

    @classmethod
    def from_toml(cls, path) -> "SceneBundle":
        path = Path(path)
        d = _read_toml(path)
        root = path.parent
        try:
            mask = d["mask"]
            return cls(
                name=str(d.get("name", path.stem)),
                source_path=root / d["source"],
                target_path=root / d["target"],
                mask_rect=tuple(int(v) for v in mask["rect"]) if "rect" in mask else None,
                mask_path=root / mask["raster"] if "raster" in mask else None,
                offset=tuple(int(v) for v in d.get("offset", (0, 0))),
                lam=float(d.get("lambda", 1.0)),
                mode=GuidanceMode.parse(str(d.get("mode", "max"))),
            )
        except KeyError as exc:
            raise ConfigError(f"{path}: missing key {exc}") from exc

    def images(self) -> tuple[np.ndarray, np.ndarray]:
        return read_png(self.source_path), read_png(self.target_path)

    def region(self, target_shape=None, source_shape=None) -> MaskRegion:
        if target_shape is None or source_shape is None:
            s, t = self.images()
            target_shape, source_shape = t.shape[:2], s.shape[:2]
        if self.mask_rect is not None:
            return MaskRegion.rect(target_shape, *self.mask_rect, offset=self.offset, source_shape=source_shape)
        m = read_mask_png(self.mask_path)
        if m.shape != tuple(target_shape[:2]):
            raise UsageError(f"mask {m.shape} does not match target {tuple(target_shape[:2])}")
        return MaskRegion(m, self.offset, tuple(source_shape[:2]))


def bundled_scene(name: str) -> SceneBundle:
    p = data_dir() / name / "scene.toml"
    if not p.is_file():
        raise UsageError(f"unknown bundled scene {name!r}; choose from {', '.join(BUNDLED_SCENES)}")
    return SceneBundle.from_toml(p)


def resolve_scene(name_or_path: str) -> SceneBundle:
    p = Path(name_or_path)
    if p.suffix == ".toml" or p.is_file():
        return SceneBundle.from_toml(p)
    return bundled_scene(name_or_path)


def bundled_photo() -> np.ndarray:
    return read_png(data_dir() / "photo.png")


# ---------------------------------------------------------------------------
# procedural radiance scenes
# ---------------------------------------------------------------------------


def _primitive_mask(prim: dict, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Node membership and node colours for one primitive."""
    kind = prim.get("kind")
    color = np.asarray(prim.get("color", (0.5, 0.5, 0.5)), dtype=np.float64)
    cols = np.broadcast_to(color, pos.shape).copy()
    if kind == "sphere":
        c = np.asarray(prim["center"], float)
        inside = np.linalg.norm(pos - c, axis=-1) <= float(prim["radius"])
    elif kind == "box":
        inside = np.all((pos >= np.asarray(prim["lo"], float)) & (pos <= np.asarray(prim["hi"], float)), axis=-1)
    elif kind == "checker_slab":
        axis = int(prim.get("axis", 2))
        inside = (pos[..., axis] >= float(prim["lo"])) & (pos[..., axis] <= float(prim["hi"]))
        period = float(prim.get("period", 0.25))
        other = [a for a in range(3) if a != axis]
        parity = (np.floor(pos[..., other[0]] / period) + np.floor(pos[..., other[1]] / period)) % 2
        a, b = (np.asarray(c, float) for c in prim.get("colors", ((0.9, 0.9, 0.9), (0.1, 0.1, 0.1))))
        cols = np.where(parity[..., None] > 0, b, a)
    else:
        raise ConfigError(f"unknown primitive kind {kind!r}")
    return inside, cols


def build_field(primitives: list[dict], resolution: int, lo, hi) -> VoxelRadianceField:
    """Rasterize primitives onto voxel nodes; later primitives overwrite earlier ones.

    Empty nodes take the colour of the nearest occupied node so colour does
    not darken towards the edges of objects.
    """
    f = VoxelRadianceField.empty(resolution, lo, hi, dtype=np.float64)
    pos = f.node_positions()
    occupied = np.zeros(f.resolution, dtype=bool)
    for prim in primitives:
        inside, cols = _primitive_mask(prim, pos)
        f.density[inside] = float(prim.get("density", 10.0))
        f.color[inside] = cols[inside]
        occupied |= inside
    if occupied.any() and not occupied.all():
        _, idx = ndimage.distance_transform_edt(~occupied, return_indices=True)
        f.color[:] = f.color[tuple(idx)]
    return VoxelRadianceField(f.density.astype(np.float32), np.clip(f.color, 0, 1).astype(np.float32), f.lo, f.hi)


@dataclass
class RadianceScene:
    source: VoxelRadianceField
    target: VoxelRadianceField
    roi: RoiBox
    radius_range: tuple[float, float]
    fov_y: float
    resolution: int
    train: dict


def load_radiance_scene(path=None) -> RadianceScene:
    """Load a procedural radiance scene (default: the bundled sphere-in-box)."""
    path = Path(path) if path is not None else data_dir() / "sphere_in_box.toml"
    d = _read_toml(path)
    try:
        fd = d["field"]
        res, lo, hi = int(fd.get("resolution", 32)), fd["lo"], fd["hi"]
        roi = d["roi"]
        cam = d.get("camera", {})
        return RadianceScene(
            source=build_field(d["source"], res, lo, hi),
            target=build_field(d["target"], res, lo, hi),
            roi=RoiBox(tuple(roi["lo"]), tuple(roi["hi"]), tuple(roi["center"])),
            radius_range=tuple(float(v) for v in cam.get("radius_range", (2.5, 3.5))),
            fov_y=float(cam.get("fov_y", 40.0)),
            resolution=int(cam.get("resolution", 64)),
            train=dict(d.get("train", {})),
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing key {exc}") from exc
