"""Voxel radiance fields: rendering, region-restricted blending and training.

Fields are dense grids of density pre-activations and RGB colours with
nodes spanning an axis-aligned box; trilinear interpolation defines the
continuous field, density is ``max(0, .)`` of the interpolant and both are
zero outside the box.  Colour is view-independent.

A ray sample is composited with weight ``T_i (1 - exp(-sigma_i delta_i))``
where ``T_i`` is the transmittance accumulated over earlier samples and
``delta_i`` the stratum length.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, UsageError
from .guidance import GuidanceMode, combine
from .optim import Adam, Schedule, deterministic_threads
from .solver import MetricsTrace

log = logging.getLogger(__name__)

EPS_BLEND = 1e-6


@dataclass
class VoxelRadianceField:
    density: np.ndarray  # (R, R, R) pre-activation
    color: np.ndarray  # (R, R, R, 3)
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.density.ndim != 3 or self.color.shape != (*self.density.shape, 3):
            raise UsageError("density must be (R,R,R) and color (R,R,R,3)")
        if np.any(self.hi <= self.lo):
            raise UsageError("field bounds are degenerate")
        if min(self.density.shape) < 2:
            raise UsageError("field resolution must be >= 2 per axis")

    @classmethod
    def empty(cls, resolution: int, lo, hi, dtype=np.float32) -> "VoxelRadianceField":
        r = int(resolution)
        return cls(np.zeros((r, r, r), dtype), np.zeros((r, r, r, 3), dtype), lo, hi)

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self.density.shape

    def node_positions(self) -> np.ndarray:
        axes = [np.linspace(self.lo[a], self.hi[a], n) for a, n in enumerate(self.resolution)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def copy(self) -> "VoxelRadianceField":
        return VoxelRadianceField(self.density.copy(), self.color.copy(), self.lo.copy(), self.hi.copy())

    def query(self, pts: np.ndarray):
        """``(sigma, color)`` at world points; zero outside the bounds."""
        idx, w = _trilinear(self, pts)
        raw = _gather(self.density.reshape(-1), idx, w)
        col = _gather(self.color.reshape(-1, 3), idx, w)
        return np.maximum(raw, 0.0), col


def _trilinear(f: VoxelRadianceField, pts: np.ndarray):
    """Flat corner indices ``(8, N)`` and weights ``(8, N)``; weights vanish outside."""
    res = np.array(f.resolution)
    s = (pts - f.lo) / (f.hi - f.lo) * (res - 1)
    inside = np.all((s >= 0) & (s <= res - 1), axis=1)
    s = np.clip(s, 0, res - 1)
    i0 = np.minimum(np.floor(s).astype(np.int64), res - 2)
    t = s - i0
    idx = np.empty((8, len(pts)), dtype=np.int64)
    w = np.empty((8, len(pts)))
    for c in range(8):
        b = [(c >> a) & 1 for a in range(3)]
        ii = i0 + np.array(b)
        idx[c] = (ii[:, 0] * res[1] + ii[:, 1]) * res[2] + ii[:, 2]
        w[c] = np.prod([t[:, a] if b[a] else 1.0 - t[:, a] for a in range(3)], axis=0)
    w *= inside
    return idx, w


def _gather(values: np.ndarray, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    v = values[idx].astype(np.float64)
    if v.ndim == 2:
        return np.sum(v * w, axis=0)
    return np.sum(v * w[:, :, None], axis=0)


def _scatter(grad: np.ndarray, idx: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
    """Adjoint of ``_gather``: accumulate per-voxel gradients in a fixed order."""
    if grad.ndim == 1:
        return np.bincount(idx.ravel(), weights=(w * grad).ravel(), minlength=n)
    return np.stack([np.bincount(idx.ravel(), weights=(w * grad[:, k]).ravel(), minlength=n) for k in range(grad.shape[1])], axis=1)


# ---------------------------------------------------------------------------
# cameras and rays
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_y: float = 40.0
    width: int = 64
    height: int = 64

    def basis(self):
        o = np.asarray(self.position, float)
        fwd = np.asarray(self.look_at, float) - o
        n = np.linalg.norm(fwd)
        if n == 0:
            raise UsageError("camera position coincides with its look-at point")
        fwd /= n
        right = np.cross(fwd, np.asarray(self.up, float))
        if np.linalg.norm(right) < 1e-9:
            raise UsageError("camera up vector is parallel to the optical axis")
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return o, fwd, right, up

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit ray directions through pixel centres, row-major ``(H*W, 3)``."""
        if self.width < 1 or self.height < 1:
            raise UsageError("camera resolution must be >= 1")
        o, fwd, right, up = self.basis()
        tan = np.tan(np.radians(self.fov_y) / 2.0)
        aspect = self.width / self.height
        u = ((np.arange(self.width) + 0.5) / self.width * 2.0 - 1.0) * tan * aspect
        v = (1.0 - (np.arange(self.height) + 0.5) / self.height * 2.0) * tan
        uu, vv = np.meshgrid(u, v)
        d = fwd + uu.reshape(-1, 1) * right + vv.reshape(-1, 1) * up
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.broadcast_to(o, d.shape).copy(), d


def box_intersect(origins: np.ndarray, dirs: np.ndarray, lo, hi):
    """Slab test; returns ``(t_near, t_far, hit)`` with ``t_near >= 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (np.asarray(lo) - origins) * inv
        t1 = (np.asarray(hi) - origins) * inv
    tmin = np.nanmax(np.minimum(t0, t1), axis=1)
    tmax = np.nanmin(np.maximum(t0, t1), axis=1)
    tmin = np.maximum(tmin, 0.0)
    return tmin, tmax, tmax > tmin


@dataclass(frozen=True)
class RaySampling:
    """Stratified samples along each ray.

    ``near``/``far`` default to the ray's entry and exit of the field box.
    Each sample represents one stratum of length ``(far - near) / n``; with
    ``jitter`` its position is uniform in the stratum, otherwise centred.
    """

    n_samples: int = 64
    near: float | None = None
    far: float | None = None
    jitter: bool = True

    def samples(self, origins, dirs, lo, hi, rng: np.random.Generator | None):
        if self.n_samples < 2:
            raise UsageError("need at least 2 samples per ray")
        if self.near is not None and self.far is not None:
            if not self.near < self.far:
                raise UsageError("sampling bounds must satisfy near < far")
            tn = np.full(len(origins), float(self.near))
            tf = np.full(len(origins), float(self.far))
            hit = np.ones(len(origins), dtype=bool)
        else:
            tn, tf, hit = box_intersect(origins, dirs, lo, hi)
            tn = np.where(hit, tn, 0.0)
            tf = np.where(hit, tf, 0.0)
        n = self.n_samples
        delta = (tf - tn) / n
        if self.jitter and rng is not None:
            u = rng.uniform(0.0, 1.0, size=(len(origins), n))
        else:
            u = np.full((len(origins), n), 0.5)
        t = tn[:, None] + (np.arange(n)[None, :] + u) * delta[:, None]
        pts = origins[:, None, :] + t[:, :, None] * dirs[:, None, :]
        return pts, np.broadcast_to(delta[:, None], t.shape), hit


# ---------------------------------------------------------------------------
# compositing
# ---------------------------------------------------------------------------


def composite(sigma: np.ndarray, color: np.ndarray, delta: np.ndarray):
    """Quadrature compositing along rays.

    ``sigma`` (R, N), ``color`` (R, N, 3), ``delta`` (R, N).  Returns the
    pixel colours (R, 3) and the weights ``T_i alpha_i`` (R, N).
    """
    tau = sigma * delta
    alpha = 1.0 - np.exp(-tau)
    acc = np.cumsum(tau, axis=1)
    trans = np.exp(-np.concatenate([np.zeros((len(tau), 1)), acc[:, :-1]], axis=1))
    w = trans * alpha
    return np.einsum("rn,rnc->rc", w, color), w


def composite_backward(sigma, color, delta, w, g_pixel):
    """Adjoints of ``composite`` w.r.t. ``sigma`` and ``color``.

    ``d C / d sigma_i = delta_i (T_{i+1} c_i - sum_{j>i} w_j c_j)``.
    """
    tau = sigma * delta
    trans_next = np.exp(-np.cumsum(tau, axis=1))
    wc = w[:, :, None] * color
    tail = np.cumsum(wc[:, ::-1], axis=1)[:, ::-1] - wc  # sum over j > i
    dsig = delta[:, :, None] * (trans_next[:, :, None] * color - tail)
    g_sigma = np.einsum("rnc,rc->rn", dsig, g_pixel)
    g_color = w[:, :, None] * g_pixel[:, None, :]
    return g_sigma, g_color


def render(field_: VoxelRadianceField, cam: Camera, sampling: RaySampling = RaySampling(), rng=None) -> np.ndarray:
    """Volume-render a field; returns an ``(H, W, 3)`` float64 image."""
    o, d = cam.rays()
    pts, delta, _ = sampling.samples(o, d, field_.lo, field_.hi, rng)
    R, N = pts.shape[:2]
    sigma, col = field_.query(pts.reshape(-1, 3))
    img, _ = composite(sigma.reshape(R, N), col.reshape(R, N, 3), np.asarray(delta))
    return img.reshape(cam.height, cam.width, 3)


def blend_sigma(sigma_g, sigma_t, mu: float, phi: float):
    """Mixed density ``max(0, mu*sigma_G + phi*sigma_T)``."""
    return np.maximum(mu * np.asarray(sigma_g, dtype=np.float64) + phi * np.asarray(sigma_t, dtype=np.float64), 0.0)


def blend_color(c_g, alpha_g, c_t, alpha_t, mu: float, phi: float, eps: float = EPS_BLEND):
    """Opacity-weighted colour mix ``(mu c_G a_G + phi c_T a_T) / (eps + mu a_G + phi a_T)``."""
    c_g = np.asarray(c_g, dtype=np.float64)
    c_t = np.asarray(c_t, dtype=np.float64)
    a_g = np.asarray(alpha_g, dtype=np.float64)
    a_t = np.asarray(alpha_t, dtype=np.float64)
    if c_g.ndim > a_g.ndim:
        a_g = a_g[..., None]
        a_t = a_t[..., None]
    return (mu * c_g * a_g + phi * c_t * a_t) / (eps + mu * a_g + phi * a_t)


# ---------------------------------------------------------------------------
# region-restricted rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoiBox:
    """Region in the target field's frame, re-centred on ``center`` in the source."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    center: tuple[float, float, float]

    def __post_init__(self):
        if np.any(np.asarray(self.hi) <= np.asarray(self.lo)):
            raise UsageError("ROI box is degenerate")

    @property
    def half(self) -> np.ndarray:
        return (np.asarray(self.hi, float) - np.asarray(self.lo, float)) / 2.0

    @property
    def placed_lo(self) -> np.ndarray:
        return np.asarray(self.center, float) - self.half

    @property
    def placed_hi(self) -> np.ndarray:
        return np.asarray(self.center, float) + self.half

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Membership of source-frame points in the placed region."""
        return np.all((pts >= self.placed_lo) & (pts <= self.placed_hi), axis=-1)

    def to_target(self, pts: np.ndarray) -> np.ndarray:
        return pts - np.asarray(self.center, float) + (np.asarray(self.lo, float) + np.asarray(self.hi, float)) / 2.0

    def validate(self, source: VoxelRadianceField, target: VoxelRadianceField) -> None:
        if np.any(np.asarray(self.lo) < target.lo) or np.any(np.asarray(self.hi) > target.hi):
            raise UsageError("ROI must lie inside the target field bounds")
        if np.any(self.placed_lo < source.lo) or np.any(self.placed_hi > source.hi):
            raise UsageError("placed ROI must lie inside the source field bounds")


@dataclass
class RoiRender:
    I_S: np.ndarray
    I_T: np.ndarray
    I_G: np.ndarray
    hits: np.ndarray  # (H, W) rays with at least one sample in the region
    cache: dict = field(default_factory=dict, repr=False)


def render_roi(S, T, G, cam: Camera, roi: RoiBox, mu: float, phi: float, sampling: RaySampling = RaySampling(), rng=None, eps: float = EPS_BLEND, keep_cache: bool = False) -> RoiRender:
    """Render the aligned triplet under identical rays.

    ``I_S``: plain source render.  ``I_T``: the target restricted to the
    region (density outside it set to zero, so rays missing the region are
    exactly zero).  ``I_G``: the blend, taking source samples outside the
    region and the mixed (G, T) samples inside it.
    """
    roi.validate(S, T)
    o, d = cam.rays()
    pts, delta, _ = sampling.samples(o, d, S.lo, S.hi, rng)
    delta = np.asarray(delta)
    R, N = pts.shape[:2]
    flat = pts.reshape(-1, 3)
    inside = roi.contains(flat).reshape(R, N)

    sig_s, col_s = S.query(flat)
    sig_s, col_s = sig_s.reshape(R, N), col_s.reshape(R, N, 3)
    I_S, _ = composite(sig_s, col_s, delta)

    sig_t = np.zeros((R, N))
    col_t = np.zeros((R, N, 3))
    sig_g = np.zeros((R, N))
    col_g = np.zeros((R, N, 3))
    raw_g = np.zeros((R, N))
    sel = inside.ravel()
    in_pts = flat[sel]
    if sel.any():
        st, ct = T.query(roi.to_target(in_pts))
        sig_t[inside], col_t[inside] = st, ct
        idx_g, w_g = _trilinear(G, in_pts)
        raw = _gather(G.density.reshape(-1), idx_g, w_g)
        raw_g[inside] = raw
        sig_g[inside] = np.maximum(raw, 0.0)
        col_g[inside] = _gather(G.color.reshape(-1, 3), idx_g, w_g)
    I_T, _ = composite(sig_t, col_t, delta)

    a_g = 1.0 - np.exp(-sig_g * delta)
    a_t = 1.0 - np.exp(-sig_t * delta)
    sig_b = np.where(inside, blend_sigma(sig_g, sig_t, mu, phi), sig_s)
    col_b = np.where(inside[:, :, None], blend_color(col_g, a_g, col_t, a_t, mu, phi, eps), col_s)
    I_G, w_b = composite(sig_b, col_b, delta)
    hits = inside.any(axis=1)
    # rays that never enter the region are the plain source render (indicator term)
    I_G = np.where(hits[:, None], I_G, I_S)

    h, w = cam.height, cam.width
    out = RoiRender(I_S.reshape(h, w, 3), I_T.reshape(h, w, 3), I_G.reshape(h, w, 3), hits.reshape(h, w))
    if keep_cache:
        out.cache = dict(
            inside=inside, delta=delta, sig_g=sig_g, raw_g=raw_g, col_g=col_g, sig_t=sig_t, col_t=col_t,
            a_g=a_g, a_t=a_t, sig_b=sig_b, col_b=col_b, w_b=w_b, idx_g=idx_g if sel.any() else None,
            w_g=w_g if sel.any() else None, mu=mu, phi=phi, eps=eps,
        )
    return out


def render_replacement(S, T, cam: Camera, roi: RoiBox, sampling: RaySampling = RaySampling(), rng=None) -> np.ndarray:
    """Baseline: the region's samples are taken from the target alone."""
    roi.validate(S, T)
    o, d = cam.rays()
    pts, delta, _ = sampling.samples(o, d, S.lo, S.hi, rng)
    R, N = pts.shape[:2]
    flat = pts.reshape(-1, 3)
    inside = roi.contains(flat)
    sig, col = S.query(flat)
    if inside.any():
        st, ct = T.query(roi.to_target(flat[inside]))
        sig[inside], col[inside] = st, ct
    img, _ = composite(sig.reshape(R, N), col.reshape(R, N, 3), np.asarray(delta))
    return img.reshape(cam.height, cam.width, 3)


def roi_backward(rr: RoiRender, G: VoxelRadianceField, g_image: np.ndarray):
    """Gradient of a scalar loss w.r.t. G's density and colour voxels.

    ``g_image`` is dL/dI_G with shape (H, W, 3).
    """
    c = rr.cache
    n_vox = G.density.size
    g_den = np.zeros(n_vox)
    g_col = np.zeros((n_vox, 3))
    if c.get("idx_g") is None:
        return g_den.reshape(G.density.shape), g_col.reshape(G.color.shape)
    g_pix = g_image.reshape(-1, 3) * rr.hits.reshape(-1, 1)
    g_sig_b, g_col_b = composite_backward(c["sig_b"], c["col_b"], c["delta"], c["w_b"], g_pix)
    inside = c["inside"]
    mu, phi, eps = c["mu"], c["phi"], c["eps"]
    delta = c["delta"][inside]
    sig_g, sig_t = c["sig_g"][inside], c["sig_t"][inside]
    a_g, a_t = c["a_g"][inside], c["a_t"][inside]
    c_g, c_t = c["col_g"][inside], c["col_t"][inside]
    gs, gc = g_sig_b[inside], g_col_b[inside]
    denom = eps + mu * a_g + phi * a_t
    c_mix = (mu * c_g * a_g[:, None] + phi * c_t * a_t[:, None]) / denom[:, None]
    # sigma path: max(0, mu s_G + phi s_T), right derivative at zero
    active = (mu * sig_g + phi * sig_t) >= 0
    g_sig_g = gs * mu * active
    # colour path through alpha_G
    g_alpha_g = np.sum(gc * mu * (c_g - c_mix), axis=1) / denom
    g_sig_g = g_sig_g + g_alpha_g * delta * (1.0 - a_g)
    g_raw = g_sig_g * (c["raw_g"][inside] >= 0)
    g_cg = gc * (mu * a_g / denom)[:, None]
    g_den += _scatter(g_raw, c["idx_g"], c["w_g"], n_vox)
    g_col += _scatter(g_cg, c["idx_g"], c["w_g"], n_vox)
    return g_den.reshape(G.density.shape), g_col.reshape(G.color.shape)


# ---------------------------------------------------------------------------
# poses and the training loop
# ---------------------------------------------------------------------------


def sample_pose(rng: np.random.Generator, roi: RoiBox, radius_range, fov_y: float = 40.0, resolution: int = 64) -> Camera:
    """Camera on a spherical shell around the placed region's centre, aimed at it.

    The position is uniform over the shell volume.
    """
    r_min, r_max = (float(v) for v in radius_range)
    if not (0.0 < r_min <= r_max):
        raise UsageError(f"invalid radius range {radius_range}")
    u = rng.uniform()
    r = (r_min**3 + u * (r_max**3 - r_min**3)) ** (1.0 / 3.0)
    z = rng.uniform(-1.0, 1.0)
    az = rng.uniform(0.0, 2.0 * np.pi)
    s = np.sqrt(max(0.0, 1.0 - z * z))
    direction = np.array([s * np.cos(az), s * np.sin(az), z])
    c = np.asarray(roi.center, float)
    up = (0.0, 0.0, 1.0) if abs(z) < 0.99 else (0.0, 1.0, 0.0)
    return Camera(tuple(c + r * direction), tuple(c), up, fov_y, resolution, resolution)


def image_plane_losses(I_G, I_S, I_T, region2d: np.ndarray, mode: GuidanceMode, lam: float):
    """2D blend losses on a rendered triplet and their gradient w.r.t. ``I_G``.

    Gradient term: per-axis mean over forward-difference stencils lying
    inside ``region2d`` of the squared residual to the guidance built from
    ``I_S`` and ``I_T``.  Colour term: mean squared error to ``I_S`` over
    pixels outside ``region2d``.
    """
    from .classical import forward_diff

    gx, gy = forward_diff(I_G)
    sx, sy = forward_diff(I_S)
    tx, ty = forward_diff(I_T)
    vx, _ = combine(sx, tx, mode)
    vy, _ = combine(sy, ty, mode)
    st_x = np.zeros_like(region2d)
    st_y = np.zeros_like(region2d)
    st_x[:, :-1] = region2d[:, :-1] & region2d[:, 1:]
    st_y[:-1] = region2d[:-1] & region2d[1:]
    grad = np.zeros_like(I_G)
    l_grad = 0.0
    for axis, (g, v, st) in enumerate(((gx, vx, st_x), (gy, vy, st_y))):
        n = st.sum()
        if n == 0:
            continue
        r = np.where(st[:, :, None], g - v, 0.0)
        l_grad += float(np.sum(r * r) / n)
        dr = 2.0 * r / n
        if axis == 0:
            grad[:, 1:] += dr[:, :-1]
            grad[:, :-1] -= dr[:, :-1]
        else:
            grad[1:] += dr[:-1]
            grad[:-1] -= dr[:-1]
    bg = ~region2d
    l_color = 0.0
    if bg.any():
        diff = np.where(bg[:, :, None], I_G - I_S, 0.0)
        l_color = float(np.sum(diff * diff) / bg.sum())
        grad += lam * 2.0 * diff / bg.sum()
    return l_grad, l_color, grad


def _mix_weights(mode: GuidanceMode) -> tuple[float, float]:
    return (mode.mu, mode.phi) if mode.kind == "affine" else (1.0, 1.0)


@dataclass
class RadianceBlendConfig:
    mode: GuidanceMode = field(default_factory=GuidanceMode)
    lam: float = 1.0
    schedule: Schedule = field(default_factory=lambda: Schedule(steps=300, lr=2e-2, lr_min=1e-4, log_every=10))
    seed: int = 0
    render_resolution: int = 64
    n_samples: int = 64
    radius_range: tuple[float, float] = (2.5, 3.5)
    fov_y: float = 40.0
    deterministic: bool = True


def region_voxel_mask(G: VoxelRadianceField, roi: RoiBox) -> np.ndarray:
    return roi.contains(G.node_positions().reshape(-1, 3)).reshape(G.resolution)


def blend_radiance(S: VoxelRadianceField, T: VoxelRadianceField, roi: RoiBox, cfg: RadianceBlendConfig = RadianceBlendConfig()):
    """Train a blend field ``G`` (a copy of ``S``) from randomly posed renders.

    Only voxels whose node lies inside the placed region are updated; all
    others stay bitwise equal to the source.
    """
    roi.validate(S, T)
    G = S.copy()
    mu, phi = _mix_weights(cfg.mode)
    mask = region_voxel_mask(G, roi)
    rng = np.random.default_rng(cfg.seed)
    sampling = RaySampling(cfg.n_samples, jitter=True)
    params = [G.density, G.color]
    masks = [mask, np.broadcast_to(mask[..., None], G.color.shape)]
    adam = Adam(params, cfg.schedule)
    trace = MetricsTrace(lam=cfg.lam)
    last_good = G.copy()
    with deterministic_threads(cfg.deterministic):
        for step in range(cfg.schedule.steps):
            cam = sample_pose(rng, roi, cfg.radius_range, cfg.fov_y, cfg.render_resolution)
            rr = render_roi(S, T, G, cam, roi, mu, phi, sampling, rng, keep_cache=True)
            l_grad, l_color, g_img = image_plane_losses(rr.I_G, rr.I_S, rr.I_T, rr.hits, cfg.mode, cfg.lam)
            if not np.isfinite(l_grad + l_color):
                raise NumericError(f"non-finite radiance loss at step {step}", index=step, checkpoint=last_good)
            if step % cfg.schedule.log_every == 0 or step == cfg.schedule.steps - 1:
                trace.log(step, l_grad, l_color)
                last_good = G.copy()
            g_den, g_col = roi_backward(rr, G, g_img)
            adam.step(params, [g_den, g_col], masks)
            np.clip(G.color, 0.0, 1.0, out=G.color, where=masks[1])
    return G, trace


def evaluation_poses(roi: RoiBox, radius_range, n: int = 8, seed: int = 12345, fov_y: float = 40.0, resolution: int = 64) -> list[Camera]:
    rng = np.random.default_rng(seed)
    return [sample_pose(rng, roi, radius_range, fov_y, resolution) for _ in range(n)]


def image_plane_grad_loss(S, T, G, roi: RoiBox, cams, mode: GuidanceMode, n_samples: int = 64, replacement: bool = False) -> float:
    """Mean image-plane gradient loss over a set of poses (deterministic samples)."""
    mu, phi = _mix_weights(mode)
    sampling = RaySampling(n_samples, jitter=False)
    vals = []
    for cam in cams:
        rr = render_roi(S, T, G, cam, roi, mu, phi, sampling)
        I = render_replacement(S, T, cam, roi, sampling) if replacement else rr.I_G
        l_grad, _, _ = image_plane_losses(I, rr.I_S, rr.I_T, rr.hits, mode, 0.0)
        vals.append(l_grad)
    return float(np.mean(vals))
