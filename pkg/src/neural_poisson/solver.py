"""Boundary-condition-free Poisson blending of two fitted image networks.

A third network ``G`` is optimized on

    L = L_grad + lam * L_color

where ``L_grad`` is the mean squared Frobenius residual between the spatial
jacobian of ``G`` and the guidance field over samples inside the region and
``L_color`` is the mean squared colour difference between ``G`` and the
source network over samples of the whole background.  No boundary values
are imposed.

Inside the training loop jacobians are expressed per pixel (normalized
derivatives times the pixel pitch) so both terms are on the scale of the
discrete residual metrics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classical import MaskRegion
from .errors import NumericError, UsageError
from .fit import FitOptions, fit_image, psnr, render_image
from .guidance import GuidanceMode, GuidanceSamples, guidance_at
from .inr import ArchSpec, ForwardPass, InrModel, evaluate, extend_levels, init_model, max_grid_levels, spatial_jacobian
from .optim import Adam, Schedule, deterministic_threads

log = logging.getLogger(__name__)

BAND_WIDTH_PX = 2.0


@dataclass
class MetricsTrace:
    lam: float
    steps: list[int] = field(default_factory=list)
    grad: list[float] = field(default_factory=list)
    color: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)

    def log(self, step: int, l_grad: float, l_color: float) -> None:
        self.steps.append(step)
        self.grad.append(l_grad)
        self.color.append(l_color)
        self.total.append(l_grad + self.lam * l_color)

    def rows(self):
        return list(zip(self.steps, self.grad, self.color, self.total))

    def to_csv(self) -> str:
        lines = ["step,l_grad,l_color,total"]
        lines += [f"{s},{g:.10e},{c:.10e},{t:.10e}" for s, g, c, t in self.rows()]
        return "\n".join(lines) + "\n"


@dataclass
class BlendProblem:
    """Everything a 2D neural blend needs.

    ``color_loss`` selects the background term: ``"global"`` (whole
    background) or ``"boundary"`` (a band of ``BAND_WIDTH_PX`` pixels
    around the region, the ablation control).

    ``G`` uses the source architecture with ``blend_levels`` grid levels
    (``None``: as many as keep 9 nodes per axis on the coarsest level).
    ``warm_start="clone"`` embeds the source network unchanged, with zero
    coarse latents, so ``G`` starts as an exact copy of ``S``;
    ``"fit"`` fits a fresh network to the rendered source instead.
    """

    source: InrModel
    target: InrModel
    region: MaskRegion
    mode: GuidanceMode = field(default_factory=GuidanceMode)
    lam: float = 1.0
    schedule: Schedule = field(default_factory=lambda: Schedule(steps=3000, lr=1e-3, lr_min=1e-5, log_every=50))
    seed: int = 0
    n_inside: int = 4096
    n_background: int = 4096
    color_loss: str = "global"
    warm_start: str = "clone"
    warm_steps: int = 1500
    warm_psnr: float = 45.0
    blend_levels: int | None = None
    table_lr_scale: float = 10.0
    deterministic: bool = True

    def validate(self) -> None:
        if not np.isfinite(self.lam) or self.lam < 0:
            raise UsageError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.color_loss not in ("global", "boundary"):
            raise UsageError(f"unknown color loss {self.color_loss!r}")
        if self.warm_start not in ("fit", "clone"):
            raise UsageError(f"unknown warm start {self.warm_start!r}")
        if self.source.arch.input_dim != 2 or self.target.arch.input_dim != 2:
            raise UsageError("the 2D solver needs networks with two inputs")
        if self.source.arch.output_dim != self.target.arch.output_dim:
            raise UsageError("source and target networks must have the same number of channels")
        if self.region.mask.shape != self.region.source_shape:
            raise UsageError("the neural solver needs source and target rasters of equal size")

    @property
    def shape(self) -> tuple[int, int]:
        return self.region.source_shape

    @property
    def pixel_pitch(self) -> np.ndarray:
        """Size of one pixel along (x, y) in normalized units."""
        h, w = self.shape
        return np.array([2.0 / w, 2.0 / h])


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _pixel_to_norm(px: np.ndarray, py: np.ndarray, shape) -> np.ndarray:
    h, w = shape
    return np.stack([-1.0 + (2.0 * px + 1.0) / w, -1.0 + (2.0 * py + 1.0) / h], axis=1)


def _stratified(candidates: np.ndarray, n: int, accept, shape, rng: np.random.Generator, max_rounds: int = 64) -> np.ndarray:
    """Jittered samples over candidate pixel squares, keeping accepted points.

    Each round spreads the outstanding count evenly over the candidate
    pixels (random remainder), jitters uniformly inside each pixel and
    rejects points failing ``accept``.
    """
    rows, cols = np.nonzero(candidates)
    m = rows.size
    out = []
    need = n
    for _ in range(max_rounds):
        if need <= 0:
            break
        per, rem = divmod(need, m)
        pick = np.repeat(np.arange(m), per)
        if rem:
            pick = np.concatenate([pick, rng.choice(m, size=rem, replace=False)])
        jitter = rng.uniform(-0.5, 0.5, size=(pick.size, 2))
        pts = _pixel_to_norm(cols[pick] + jitter[:, 0], rows[pick] + jitter[:, 1], shape)
        pts = pts[accept(pts)]
        out.append(pts[:need])
        need -= len(out[-1])
    if need > 0:
        raise UsageError("could not draw enough samples from the requested region")
    pts = np.concatenate(out)
    return pts[rng.permutation(len(pts))]


def sample_coords(region: MaskRegion, counts: tuple[int, int], rng: np.random.Generator):
    """Stratified jittered samples inside the region and on the background.

    Membership uses the bilinearly interpolated mask at threshold 0.5.
    Points where it disagrees with the pixel-square membership (a sliver
    at region corners) are not drawn, so both batches are exact under
    either reading.
    """
    n_in, n_bg = counts
    if n_in < 1 or n_bg < 1:
        raise UsageError("sample counts must be >= 1")
    om = region.omega
    shape = om.shape
    grown = np.pad(om, 1, mode="edge")
    dil = om | grown[:-2, 1:-1] | grown[2:, 1:-1] | grown[1:-1, :-2] | grown[1:-1, 2:]
    interior = om & grown[:-2, 1:-1] & grown[2:, 1:-1] & grown[1:-1, :-2] & grown[1:-1, 2:]
    if (~interior).sum() == 0 or om.all():
        raise UsageError("background is empty")
    inside = _stratified(dil, n_in, lambda p: region.contains(p) & region.pixel_contains(p), shape, rng)
    background = _stratified(~interior, n_bg, lambda p: ~(region.contains(p) | region.pixel_contains(p)), shape, rng)
    return inside, background


def sample_band(region: MaskRegion, n: int, rng: np.random.Generator, width: float = BAND_WIDTH_PX) -> np.ndarray:
    """Background samples whose distance to the region edge lies in (0, width] pixels."""
    if n < 1:
        raise UsageError("sample count must be >= 1")
    dist = region.outside_distance

    def accept(p):
        return ~(region.contains(p) | region.pixel_contains(p)) & (region.interpolated(p, dist) <= width)

    cand = ~region.omega & (dist <= width + 1.0)
    if not cand.any():
        raise UsageError("boundary band is empty")
    return _stratified(cand, n, accept, region.omega.shape, rng)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def loss_grad_eval(G: InrModel, samples: GuidanceSamples, axis_scale=None) -> float:
    """Mean squared Frobenius residual between ``G``'s jacobian and ``v``.

    ``axis_scale`` multiplies the residual column of each input axis
    (e.g. the pixel pitch to express derivatives per pixel).
    """
    if len(samples) == 0:
        raise UsageError("no guidance samples")
    r = spatial_jacobian(G, samples.coords).astype(np.float64) - samples.v
    if axis_scale is not None:
        r = r * np.asarray(axis_scale, dtype=np.float64)
    return float(np.sum(r * r) / len(samples))


def loss_color_eval(G: InrModel, S: InrModel, background) -> float:
    """Mean squared colour difference between two networks on a batch."""
    x = np.asarray(background, dtype=np.float64)
    if len(x) == 0:
        raise UsageError("empty background batch")
    r = evaluate(G, x).astype(np.float64) - evaluate(S, x).astype(np.float64)
    return float(np.sum(r * r) / len(x))


def loss_color_boundary_eval(G: InrModel, S: InrModel, boundary) -> float:
    """Colour loss restricted to a band around the region edge (ablation control)."""
    return loss_color_eval(G, S, boundary)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def warm_start(problem: BlendProblem) -> InrModel:
    """Initial ``G``: a clone of ``S`` or a fresh network fitted to ``S``'s raster."""
    S = problem.source
    levels = 1
    if S.table is not None:
        levels = problem.blend_levels or max_grid_levels(S.arch)
        levels = max(levels, S.arch.grid_levels)
    if problem.warm_start == "clone":
        return extend_levels(S, levels) if S.table is not None else S.copy()
    h, w = problem.shape
    arch = ArchSpec(**{**S.arch.__dict__, "grid_levels": levels})
    G0 = init_model(arch, problem.seed + 1, dtype=S.dtype)
    opts = FitOptions(
        schedule=Schedule(steps=problem.warm_steps, lr=1e-3, lr_min=1e-5, log_every=25),
        table_lr_scale=problem.table_lr_scale,
        target_psnr=problem.warm_psnr,
        deterministic=problem.deterministic,
        jitter=False,
    )
    G, _ = fit_image(G0, np.clip(render_image(S, h, w), 0.0, 1.0), opts)
    return G


def blend_2d(problem: BlendProblem, G0: InrModel | None = None) -> tuple[InrModel, MetricsTrace]:
    """Optimize a blend network; returns it with the logged loss trace.

    ``G0`` overrides the warm start (used to share one warm start across
    a parameter sweep).
    """
    problem.validate()
    S, T, region = problem.source, problem.target, problem.region
    with deterministic_threads(problem.deterministic):
        G = warm_start(problem) if G0 is None else G0.copy()
        pitch = problem.pixel_pitch
        offset = region.normalized_offset
        rng = np.random.default_rng(problem.seed)
        sched = problem.schedule
        params = G.parameters()
        scale = [problem.table_lr_scale] + [1.0] * (len(params) - 1) if G.table is not None else None
        adam = Adam(params, sched, scale)
        trace = MetricsTrace(lam=problem.lam)
        history: list[float] = []
        last_good = G.copy()
        lam = problem.lam
        for step in range(sched.steps):
            inside, bg = sample_coords(region, (problem.n_inside, problem.n_background), rng)
            if problem.color_loss == "boundary":
                bg = sample_band(region, problem.n_background, rng)
            guide = guidance_at(S, T, inside, offset, problem.mode)
            fin = ForwardPass(G, inside, with_jacobian=True)
            rg = (fin.jacobian.astype(np.float64) - guide.v) * pitch
            l_grad = float(np.sum(rg * rg) / len(inside))
            fbg = ForwardPass(G, bg, with_jacobian=False)
            rc = fbg.values.astype(np.float64) - evaluate(S, bg).astype(np.float64)
            l_color = float(np.sum(rc * rc) / len(bg))
            total = l_grad + lam * l_color
            if not np.isfinite(total):
                raise NumericError(f"non-finite blend loss at step {step}", index=step, checkpoint=last_good)
            if step % sched.log_every == 0 or step == sched.steps - 1:
                trace.log(step, l_grad, l_color)
                last_good = G.copy()
                log.debug("blend step %d: grad %.3e color %.3e", step, l_grad, l_color)
            history.append(total)
            if len(history) > 100:
                prev = history[-101]
                if prev > 0 and abs(total - prev) / prev < 1e-6:
                    log.info("blend converged at step %d", step)
                    trace.log(step, l_grad, l_color)
                    break
            g1 = fin.pullback(d_jacobian=2.0 * rg * pitch / len(inside))
            if lam != 0.0:
                g1 = g1 + fbg.pullback(d_values=2.0 * lam * rc / len(bg))
            adam.step(params, g1.arrays)
            G.set_parameters(params)
    return G, trace


def warm_start_psnr(G: InrModel, S: InrModel, shape) -> float:
    h, w = shape
    return psnr(render_image(G, h, w), render_image(S, h, w))
