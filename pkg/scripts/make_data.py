"""Regenerate the bundled scenes under src/neural_poisson/data.

Run from the repository root: ``python scripts/make_data.py``.  The photo
crop needs scikit-image (a development-only dependency).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

N = 128
DATA = Path(__file__).resolve().parents[1] / "src" / "neural_poisson" / "data"
yy, xx = np.mgrid[0:N, 0:N].astype(np.float64)


def save_png(path: Path, img: np.ndarray) -> None:
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(path, format="PNG", optimize=False)


def write_scene(name: str, source, target, rect, offset, mode="max", lam=1.0) -> None:
    d = DATA / name
    d.mkdir(parents=True, exist_ok=True)
    save_png(d / "source.png", source)
    save_png(d / "target.png", target)
    x0, y0, x1, y1 = rect
    (d / "scene.toml").write_text(
        f'name = "{name}"\n'
        'source = "source.png"\n'
        'target = "target.png"\n'
        f"offset = [{offset[0]}, {offset[1]}]\n"
        f"lambda = {lam}\n"
        f'mode = "{mode}"\n\n'
        "[mask]\n"
        f"rect = [{x0}, {y0}, {x1}, {y1}]\n",
        encoding="utf-8",
    )


def ramp_scene():
    """Steep colour ramps pasted into a nearly flat wall."""
    src = np.ones((N, N, 3)) * np.array([0.55, 0.6, 0.7]) + 0.03 * np.sin(xx / 40.0)[..., None]
    tgt = np.stack(
        [0.5 + 0.85 * (xx - 64) / 40, 0.5 - 0.85 * (yy - 64) / 40, 0.5 + 0.6 * (xx + yy - 128) / 80], axis=-1
    )
    write_scene("ramp", src, tgt, (46, 46, 82, 82), (-8, 6))


def edge_scene():
    """A sharp dark/bright edge crossing the region, placed on a soft gradient."""
    src = np.ones((N, N, 3)) * np.array([0.45, 0.5, 0.5]) + 0.1 * ((xx + yy) / (2 * N))[..., None]
    e = 1.0 / (1.0 + np.exp(-(xx - 64 + 0.3 * (yy - 64)) / 1.0))
    tgt = np.stack([0.05 + 0.9 * e, 0.05 + 0.85 * e, 0.1 + 0.8 * e], axis=-1)
    # the target contrasts strongly with the wall at the region edge; a light
    # colour weight lets the blend take that jump outside the region
    write_scene("edge", src, tgt, (36, 36, 92, 92), (4, -6), lam=0.1)


def textured_scene():
    """Wavy wallpaper background with a plain panel receiving a patterned disk."""
    rng = np.random.default_rng(3)
    tex = np.zeros((N, N, 3))
    for _ in range(6):
        f = rng.uniform(0.15, 0.45, 2)
        ph = rng.uniform(0, 6.3)
        c = rng.uniform(-1, 1, 3)
        tex += c * np.sin(f[0] * xx + f[1] * yy + ph)[..., None]
    tex *= 0.08
    cx, cy = 74, 72
    panel = np.clip((np.maximum(abs(xx - cx), abs(yy - cy)) - 30) / 6, 0, 1)
    src = np.array([0.55, 0.5, 0.45]) + panel[..., None] * tex + 0.1 * (yy / N)[..., None]
    disk = 1.0 / (1.0 + np.exp((np.hypot(xx - 64, yy - 64) - 14) / 1.0))
    tgt = np.stack(
        [
            0.5 + 0.3 * np.sin(xx / 8) + 0.15 * disk,
            0.45 + 0.3 * np.cos(yy / 7) * (1 - disk) + 0.2 * disk,
            0.5 + 0.3 * np.sin((xx + yy) / 10) - 0.2 * disk,
        ],
        axis=-1,
    )
    write_scene("textured", src, tgt, (42, 42, 86, 86), (10, 8))


def photo():
    from skimage import data, transform

    img = data.astronaut()[0:300, 100:400] / 255.0
    small = transform.resize(img, (N, N), anti_aliasing=True)
    save_png(DATA / "photo.png", small)


SPHERE_IN_BOX_TAIL = """\
[[target]]
kind = "sphere"
center = [0.0, 0.0, 0.0]
radius = 0.18
density = 12.0
color = [0.95, 0.55, 0.15]

[roi]
lo = [-0.4, -0.4, -0.4]
hi = [0.4, 0.4, 0.4]
center = [0.0, 0.0, -0.2]

[camera]
radius_range = [2.6, 3.4]
fov_y = 40.0
resolution = 64

[train]
steps = 300
lr = 0.02
mode = "max"
"""


def wire_box_bars(center, half, thick):
    """The twelve edges of an axis-aligned cube as thin boxes."""
    bars = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for s1 in (-1, 1):
            for s2 in (-1, 1):
                lo, hi = [0.0] * 3, [0.0] * 3
                lo[axis], hi[axis] = center[axis] - half - thick, center[axis] + half + thick
                for a, s in zip(others, (s1, s2)):
                    lo[a], hi[a] = center[a] + s * half - thick, center[a] + s * half + thick
                bars.append((lo, hi))
    return bars


def radiance_scene():
    """Source: an opaque wire box. Target: a sphere placed inside it."""
    fmt = lambda v: ", ".join(f"{x:.2f}" for x in v)  # noqa: E731
    lines = [
        "# Source: the edges of a cube (a wire box) floating in empty space.",
        "# Target: an opaque sphere, placed inside the box by the region below.",
        "[field]", "resolution = 32", "lo = [-1.0, -1.0, -1.0]", "hi = [1.0, 1.0, 1.0]", "",
    ]
    for lo, hi in wire_box_bars((0.0, 0.0, -0.2), 0.3, 0.06):
        lines += ["[[source]]", 'kind = "box"', f"lo = [{fmt(lo)}]", f"hi = [{fmt(hi)}]",
                  "density = 15.0", "color = [0.35, 0.75, 0.8]", ""]
    text = "\n".join(lines) + "\n" + SPHERE_IN_BOX_TAIL
    (DATA / "sphere_in_box.toml").write_text(text, encoding="utf-8")


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    ramp_scene()
    edge_scene()
    textured_scene()
    photo()
    radiance_scene()
