"""Fitting a coordinate network to a raster image."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import NumericError, UsageError
from .inr import ForwardPass, InrModel, evaluate
from .optim import Adam, Schedule, deterministic_threads

log = logging.getLogger(__name__)


def pixel_coords(height: int, width: int) -> np.ndarray:
    """Pixel-centre coordinates in ``[-1, 1]^2`` as ``(H*W, 2)`` rows of (x, y).

    Row-major: index ``i*W + j`` is row ``i`` (y), column ``j`` (x).
    """
    xs = -1.0 + (2.0 * np.arange(width) + 1.0) / width
    ys = -1.0 + (2.0 * np.arange(height) + 1.0) / height
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def render_image(model: InrModel, height: int, width: int, chunk: int = 1 << 15) -> np.ndarray:
    """Evaluate a 2D model on the pixel grid, returning ``(H, W, C)`` float64."""
    xy = pixel_coords(height, width)
    out = [evaluate(model, xy[i : i + chunk]) for i in range(0, len(xy), chunk)]
    return np.concatenate(out).astype(np.float64).reshape(height, width, -1)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio for signals in [0, 1]; 99 dB when identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return 99.0
    return float(min(99.0, 10.0 * np.log10(1.0 / mse)))


@dataclass(frozen=True)
class FitOptions:
    """``jitter`` supervises fresh uniform points (one per pixel square) against
    the bilinear interpolant of the image instead of the pixel centres only,
    which constrains the network between pixel centres too."""

    schedule: Schedule = Schedule(steps=2000, lr=1e-3, lr_min=1e-5, log_every=100)
    table_lr_scale: float = 10.0
    target_psnr: float | None = None
    deterministic: bool = True
    jitter: bool = True
    seed: int = 0


def bilinear_sample(image: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Bilinear interpolant of an ``(H, W, C)`` raster at normalized coords, edge-clamped."""
    H, W, C = image.shape
    col = ((coords[:, 0] + 1.0) * W - 1.0) * 0.5
    row = ((coords[:, 1] + 1.0) * H - 1.0) * 0.5
    return np.stack([ndimage.map_coordinates(image[:, :, c], [row, col], order=1, mode="nearest") for c in range(C)], axis=1)


def fit_image(model: InrModel, image: np.ndarray, opts: FitOptions = FitOptions()) -> tuple[InrModel, list[tuple[int, float]]]:
    """Full-batch Adam fit of ``model`` to ``image`` (H, W, C) in [0, 1].

    Returns the fitted copy and a list of ``(step, psnr)`` sampled every
    ``log_every`` steps (and at the final step).  With ``target_psnr`` the
    loop stops at the first logged step reaching it.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] != model.arch.output_dim:
        raise UsageError(f"image shape {img.shape} does not match output_dim={model.arch.output_dim}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise UsageError("image values must lie in [0, 1]")
    H, W, C = img.shape
    g = model.copy()
    xy = pixel_coords(H, W)
    pixels = img.reshape(-1, C)
    rng = np.random.default_rng(opts.seed)
    pitch = np.array([2.0 / W, 2.0 / H])
    sched = opts.schedule
    params = g.parameters()
    scale = [opts.table_lr_scale] + [1.0] * (len(params) - 1) if g.table is not None else None
    adam = Adam(params, sched, scale)
    trace: list[tuple[int, float]] = []
    n = xy.shape[0] * C
    reached = False
    with deterministic_threads(opts.deterministic):
        for step in range(sched.steps):
            if opts.jitter:
                pts = xy + rng.uniform(-0.5, 0.5, size=xy.shape) * pitch
                target = bilinear_sample(img, pts)
            else:
                pts, target = xy, pixels
            fp = ForwardPass(g, pts, with_jacobian=False)
            r = fp.values.astype(np.float64) - target
            mse = float(np.sum(r * r) / n)
            if not np.isfinite(mse):
                raise NumericError(f"non-finite loss at step {step}", index=step)
            if step % sched.log_every == 0:
                if opts.jitter:
                    p = psnr(render_image(g, H, W), img)
                else:
                    p = 99.0 if mse == 0.0 else min(99.0, 10.0 * np.log10(1.0 / mse))
                trace.append((step, float(p)))
                log.debug("fit step %d psnr %.2f", step, p)
                if opts.target_psnr is not None and p >= opts.target_psnr:
                    reached = True
                    break
            grad = fp.pullback(d_values=2.0 * r / n)
            adam.step(params, grad.arrays)
            g.set_parameters(params)
    if not reached:
        trace.append((sched.steps, psnr(render_image(g, H, W), img)))
    return g, trace
