"""Per-pixel residual metrics shared by the classical and neural solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical import MaskRegion, discrete_guidance, forward_diff
from .errors import UsageError
from .fit import psnr, render_image
from .guidance import GuidanceMode
from .inr import InrModel


@dataclass(frozen=True)
class ResidualReport:
    grad: float
    color: float
    mode: GuidanceMode
    solver: str
    psnr_background: float

    def as_row(self) -> dict:
        return {
            "solver": self.solver,
            "mode": str(self.mode),
            "grad": self.grad,
            "color": self.color,
            "psnr_background": self.psnr_background,
        }


def _as_raster(blend, shape) -> np.ndarray:
    if isinstance(blend, InrModel):
        return render_image(blend, *shape)
    return np.asarray(blend, dtype=np.float64)


def interior_stencils(region: MaskRegion) -> tuple[np.ndarray, np.ndarray]:
    """Pixels whose forward neighbour along x (resp. y) is also interior."""
    om = region.omega
    sx = np.zeros_like(om)
    sy = np.zeros_like(om)
    sx[:, :-1] = om[:, :-1] & om[:, 1:]
    sy[:-1] = om[:-1] & om[1:]
    return sx, sy


def gradient_residual(blend: np.ndarray, source: np.ndarray, target: np.ndarray, region: MaskRegion, mode: GuidanceMode):
    """Forward-difference residual ``(rx, ry)`` against the discrete guidance."""
    bx, by = forward_diff(blend)
    vx, vy = discrete_guidance(source, target, region, mode)
    return bx - vx, by - vy


def residual_metrics(blend, source, target, region: MaskRegion, mode: GuidanceMode, solver: str = "pie") -> ResidualReport:
    """Average per-pixel gradient and colour residuals of a blend.

    ``grad``: for each axis, the mean over interior forward-difference
    stencils (both pixels inside the region) of the squared residual summed
    over channels; the two axis means are added.  ``color``: mean over
    background pixels of the squared colour error summed over channels.
    ``blend`` may be a raster or a 2D network evaluated on the pixel grid.
    """
    s = np.asarray(source, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if s.shape[:2] != region.source_shape or t.shape[:2] != region.mask.shape:
        raise UsageError("raster shapes do not match the region frames")
    b = _as_raster(blend, region.source_shape)
    if b.shape != s.shape:
        raise UsageError(f"blend shape {b.shape} does not match source {s.shape}")
    rx, ry = gradient_residual(b, s, t, region, mode)
    sx, sy = interior_stencils(region)
    grad = 0.0
    for r, st in ((rx, sx), (ry, sy)):
        if st.any():
            rr = r[st]
            grad += float(np.sum(rr * rr) / st.sum())
    bg = ~region.omega
    diff = (b - s)[bg]
    color = float(np.sum(diff * diff) / bg.sum())
    return ResidualReport(grad, color, mode, solver, psnr(b[bg], s[bg]))
