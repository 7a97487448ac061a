"""Discrete Poisson image editing with Dirichlet boundary conditions.

Grid spacing is one pixel.  Gradients are forward differences, the
divergence is the backward difference of the guidance field, so the
composed operator is the 5-point Laplacian.  The interior system is solved
with Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .errors import UsageError
from .guidance import GuidanceMode, combine

log = logging.getLogger(__name__)

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True, eq=False)
class MaskRegion:
    """Blend region: a mask in the target frame placed into the source.

    A target pixel ``(row, col)`` lands on source pixel
    ``(row + dy, col + dx)`` where ``offset = (dx, dy)``.
    """

    mask: np.ndarray
    offset: tuple[int, int]
    source_shape: tuple[int, int]

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "offset", (int(self.offset[0]), int(self.offset[1])))
        object.__setattr__(self, "source_shape", (int(self.source_shape[0]), int(self.source_shape[1])))
        if m.ndim != 2 or not m.any():
            raise UsageError("mask must be a non-empty 2D boolean raster")
        rows, cols = np.nonzero(m)
        th, tw = m.shape
        if rows.min() < 1 or cols.min() < 1 or rows.max() > th - 2 or cols.max() > tw - 2:
            raise UsageError("mask must keep a 1-pixel margin inside the target raster")
        dx, dy = self.offset
        sh, sw = self.source_shape
        if rows.min() + dy < 1 or cols.min() + dx < 1 or rows.max() + dy > sh - 2 or cols.max() + dx > sw - 2:
            raise UsageError(f"offset {self.offset} places the region outside the source (1-pixel margin required)")

    @classmethod
    def rect(cls, target_shape, x0: int, y0: int, x1: int, y1: int, offset=(0, 0), source_shape=None) -> "MaskRegion":
        """Rectangle covering columns ``x0..x1-1`` and rows ``y0..y1-1`` of the target."""
        m = np.zeros(tuple(target_shape[:2]), dtype=bool)
        m[y0:y1, x0:x1] = True
        return cls(m, tuple(offset), tuple(source_shape or target_shape[:2]))

    @cached_property
    def omega(self) -> np.ndarray:
        """Interior set in the source frame."""
        out = np.zeros(self.source_shape, dtype=bool)
        rows, cols = np.nonzero(self.mask)
        out[rows + self.offset[1], cols + self.offset[0]] = True
        return out

    @cached_property
    def boundary(self) -> np.ndarray:
        """4-connected ring just outside the interior (source frame)."""
        return ndimage.binary_dilation(self.omega, structure=_FOUR) & ~self.omega

    def target_in_source(self, target: np.ndarray) -> np.ndarray:
        """Shift the target raster into the source frame (NaN where uncovered)."""
        t = np.asarray(target, dtype=np.float64)
        out = np.full(self.source_shape + t.shape[2:], np.nan)
        dx, dy = self.offset
        sh, sw = self.source_shape
        th, tw = t.shape[:2]
        r0, r1 = max(0, dy), min(sh, th + dy)
        c0, c1 = max(0, dx), min(sw, tw + dx)
        out[r0:r1, c0:c1] = t[r0 - dy : r1 - dy, c0 - dx : c1 - dx]
        return out

    # continuous membership used by the neural solver ------------------------

    def interpolated(self, coords: np.ndarray, field_: np.ndarray | None = None) -> np.ndarray:
        """Bilinear interpolation of a source-frame raster at normalized (x, y).

        Pixel centres are the interpolation nodes; queries beyond the outer
        centres are clamped.  Defaults to the placed mask.
        """
        f = self.omega.astype(np.float64) if field_ is None else field_
        h, w = f.shape
        x = np.asarray(coords, dtype=np.float64)
        px = np.clip(((x[:, 0] + 1.0) * w - 1.0) * 0.5, 0, w - 1)
        py = np.clip(((x[:, 1] + 1.0) * h - 1.0) * 0.5, 0, h - 1)
        j0 = np.minimum(np.floor(px).astype(int), w - 2)
        i0 = np.minimum(np.floor(py).astype(int), h - 2)
        tx, ty = px - j0, py - i0
        return (
            f[i0, j0] * (1 - tx) * (1 - ty)
            + f[i0, j0 + 1] * tx * (1 - ty)
            + f[i0 + 1, j0] * (1 - tx) * ty
            + f[i0 + 1, j0 + 1] * tx * ty
        )

    def contains(self, coords: np.ndarray) -> np.ndarray:
        """Continuous membership: interpolated mask >= 0.5."""
        return self.interpolated(coords) >= 0.5

    def pixel_contains(self, coords: np.ndarray) -> np.ndarray:
        """Membership of the pixel square holding each normalized point."""
        h, w = self.source_shape
        x = np.asarray(coords, dtype=np.float64)
        j = np.clip(np.floor((x[:, 0] + 1.0) * 0.5 * w).astype(int), 0, w - 1)
        i = np.clip(np.floor((x[:, 1] + 1.0) * 0.5 * h).astype(int), 0, h - 1)
        return self.omega[i, j]

    @cached_property
    def outside_distance(self) -> np.ndarray:
        """Per-pixel distance (pixels) from the continuous region edge, 0 inside."""
        d = ndimage.distance_transform_edt(~self.omega)
        return np.where(self.omega, 0.0, np.maximum(d - 0.5, 0.0))

    @property
    def normalized_offset(self) -> np.ndarray:
        """Translation taking source-frame normalized coords to the target frame.

        Only meaningful when source and target rasters share a shape.
        """
        sh, sw = self.source_shape
        dx, dy = self.offset
        return np.array([-2.0 * dx / sw, -2.0 * dy / sh])


def forward_diff(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along x (columns) and y (rows); last column/row zero."""
    f = np.asarray(img, dtype=np.float64)
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[:, :-1] = f[:, 1:] - f[:, :-1]
    gy[:-1] = f[1:] - f[:-1]
    return gx, gy


def backward_div(vx: np.ndarray, vy: np.ndarray) -> np.ndarray:
    """Backward-difference divergence; rows/columns with no predecessor use 0."""
    div = vx.copy()
    div[:, 1:] -= vx[:, :-1]
    div += vy
    div[1:] -= vy[:-1]
    return div


def discrete_guidance(source: np.ndarray, target: np.ndarray, region: MaskRegion, mode: GuidanceMode):
    """Forward-difference guidance ``(vx, vy)`` in the source frame.

    Values are meaningful on the interior and its boundary ring.
    """
    s = np.asarray(source, dtype=np.float64)
    t = region.target_in_source(target)
    t = np.nan_to_num(t, nan=0.0)
    sx, sy = forward_diff(s)
    tx, ty = forward_diff(t)
    vx, _ = combine(sx, tx, mode)
    vy, _ = combine(sy, ty, mode)
    return vx, vy


def _check_rasters(source, target, region: MaskRegion):
    s = np.asarray(source, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if s.shape[:2] != region.source_shape:
        raise UsageError(f"source shape {s.shape[:2]} does not match region {region.source_shape}")
    if t.shape[:2] != region.mask.shape:
        raise UsageError(f"target shape {t.shape[:2]} does not match mask {region.mask.shape}")
    if s.shape[2:] != t.shape[2:]:
        raise UsageError("source and target channel counts differ")
    return s, t


def build_rhs(source: np.ndarray, target: np.ndarray, region: MaskRegion, mode: GuidanceMode) -> np.ndarray:
    """Divergence of the guidance field, zero outside the interior."""
    s, t = _check_rasters(source, target, region)
    vx, vy = discrete_guidance(s, t, region, mode)
    div = backward_div(vx, vy)
    om = region.omega if div.ndim == 2 else region.omega[:, :, None]
    return np.where(om, div, 0.0)


@dataclass
class SolveResult:
    solution: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def _interior_system(region: MaskRegion):
    """Index map and sparse SPD matrix ``4I - adjacency`` on the interior."""
    om = region.omega
    h, w = om.shape
    index = -np.ones(om.shape, dtype=np.int64)
    rows, cols = np.nonzero(om)
    n = rows.size
    index[rows, cols] = np.arange(n)
    r_idx, c_idx = [np.arange(n)], [np.arange(n)]
    vals = [np.full(n, 4.0)]
    for di, dj in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        nr, nc = rows + di, cols + dj
        nb = index[nr, nc]
        ok = nb >= 0
        r_idx.append(np.arange(n)[ok])
        c_idx.append(nb[ok])
        vals.append(np.full(ok.sum(), -1.0))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))), shape=(n, n))
    return rows, cols, A


def conjugate_gradient(A, b: np.ndarray, tol: float, max_iter: int, x0: np.ndarray | None = None):
    """Jacobi-preconditioned CG.  Returns ``(x, rel_residual, iters, history)``."""
    diag = A.diagonal()
    inv_d = 1.0 / diag
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0, [0.0]
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]
    k = 0
    while history[-1] > tol and k < max_iter:
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        k += 1
        history.append(np.linalg.norm(r) / bnorm)
    return x, history[-1], k, history


def solve_dirichlet(rhs: np.ndarray, boundary: np.ndarray, region: MaskRegion, tol: float = 1e-8, max_iter: int = 10000) -> SolveResult:
    """Solve ``lap_h f = rhs`` on the interior with ``f = boundary`` on the ring.

    ``rhs`` and ``boundary`` are single-channel source-frame rasters; only
    interior entries of ``rhs`` and ring entries of ``boundary`` are read.
    The returned raster carries the solution on the interior and
    ``boundary`` elsewhere.  Non-convergence is reported, not raised.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    bnd = np.asarray(boundary, dtype=np.float64)
    if rhs.shape != region.source_shape or bnd.shape != region.source_shape:
        raise UsageError("rhs and boundary must be single-channel source-frame rasters")
    rows, cols, A = _interior_system(region)
    ring = np.where(region.boundary, bnd, 0.0)
    padded = np.pad(ring, 1)
    neighbour_sum = (
        padded[1 + rows, 2 + cols] + padded[1 + rows, cols] + padded[2 + rows, 1 + cols] + padded[rows, 1 + cols]
    )
    b = neighbour_sum - rhs[rows, cols]
    x, res, it, hist = conjugate_gradient(A, b, tol, max_iter)
    out = bnd.copy()
    out[rows, cols] = x
    converged = res <= tol
    if not converged:
        warnings.warn(f"CG stopped after {it} iterations at relative residual {res:.3e}", RuntimeWarning, stacklevel=2)
    return SolveResult(out, float(res), it, converged, hist)


def pie_blend(source: np.ndarray, target: np.ndarray, region: MaskRegion, mode: GuidanceMode, tol: float = 1e-8, max_iter: int = 10000) -> np.ndarray:
    """Classical Poisson blend composited over the source.

    Pixels outside the interior are copied from the source unchanged.  The
    result is not clipped to [0, 1].
    """
    s, t = _check_rasters(source, target, region)
    rhs = build_rhs(s, t, region, mode)
    out = s.copy()
    channels = [None] if s.ndim == 2 else range(s.shape[2])
    om = region.omega
    for c in channels:
        sl = np.s_[:, :] if c is None else np.s_[:, :, c]
        res = solve_dirichlet(rhs[sl], s[sl], region, tol, max_iter)
        log.debug("pie channel %s: %d iterations, residual %.2e", c, res.iterations, res.residual)
        out[sl][om] = res.solution[om]
    return out
