"""Solver comparison table and colour-loss ablation on scene bundles."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .classical import MaskRegion, pie_blend
from .fit import FitOptions, fit_image, render_image
from .guidance import GuidanceMode
from .inr import InrModel, default_image_arch, init_model
from .metrics import ResidualReport, residual_metrics
from .optim import Schedule
from .scenes import SceneBundle
from .solver import BlendProblem, blend_2d, warm_start

log = logging.getLogger(__name__)

CSV_HEADER = "scene,mode,solver,grad,color,psnr_background,status"
RATIO_FLOOR = 1e-12
DEFAULT_MODES = (GuidanceMode("max"), GuidanceMode("affine", 1.0, 1.0))


@dataclass
class RunConfig:
    """Training knobs shared by the comparison and the ablation."""

    seed: int = 0
    fit_steps: int = 1000
    fit_psnr: float | None = None
    blend_steps: int = 1000
    lam: float | None = None  # None: use the bundle's value
    deterministic: bool = True

    def fit_options(self) -> FitOptions:
        return FitOptions(
            schedule=Schedule(steps=self.fit_steps, lr=1e-3, lr_min=1e-5, log_every=50),
            target_psnr=self.fit_psnr,
            deterministic=self.deterministic,
            seed=self.seed,
        )

    def blend_schedule(self) -> Schedule:
        return Schedule(steps=self.blend_steps, lr=1e-3, lr_min=1e-5, log_every=50)


def fit_raster(image: np.ndarray, cfg: RunConfig, seed_offset: int = 0) -> InrModel:
    h, w = image.shape[:2]
    model = init_model(default_image_arch(h, w), cfg.seed + seed_offset)
    model, _ = fit_image(model, image, cfg.fit_options())
    return model


@dataclass
class PreparedScene:
    """Rasters, region and fitted networks for one bundle."""

    bundle: SceneBundle
    source: np.ndarray
    target: np.ndarray
    region: MaskRegion
    S: InrModel
    T: InrModel


def prepare_scene(bundle: SceneBundle, cfg: RunConfig) -> PreparedScene:
    s, t = bundle.images()
    region = bundle.region(t.shape[:2], s.shape[:2])
    return PreparedScene(bundle, s, t, region, fit_raster(s, cfg, 0), fit_raster(t, cfg, 100))


def blend_problem(scene: PreparedScene, mode: GuidanceMode, cfg: RunConfig, **overrides) -> BlendProblem:
    lam = scene.bundle.lam if cfg.lam is None else cfg.lam
    prob = BlendProblem(
        scene.S, scene.T, scene.region, mode, lam=lam, schedule=cfg.blend_schedule(),
        seed=cfg.seed, deterministic=cfg.deterministic,
    )
    return replace(prob, **overrides)


def _fmt(x: float) -> str:
    return f"{x:.6e}"


def _csv_row(*fields) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow(fields)
    return buf.getvalue()


def _ratio(pie: float, neural: float) -> str:
    if pie <= RATIO_FLOOR or neural <= RATIO_FLOOR:
        return "n/a"
    return _fmt(pie / neural)


@dataclass
class ComparisonResult:
    reports: list[tuple[str, ResidualReport]] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)
    rows: list[str] = field(default_factory=list)

    def csv(self) -> str:
        return "\n".join([CSV_HEADER, *self.rows]) + "\n"

    def get(self, scene: str, solver: str, mode: GuidanceMode) -> ResidualReport:
        for name, rep in self.reports:
            if name == scene and rep.solver == solver and rep.mode == mode:
                return rep
        raise KeyError((scene, solver, str(mode)))


def compare_scene(scene: PreparedScene, modes, cfg: RunConfig) -> list[ResidualReport]:
    """PIE and neural reports for every mode; one shared warm start."""
    out = []
    G0 = warm_start(blend_problem(scene, modes[0], cfg))
    for mode in modes:
        pie = pie_blend(scene.source, scene.target, scene.region, mode)
        out.append(residual_metrics(pie, scene.source, scene.target, scene.region, mode, "pie"))
        G, _ = blend_2d(blend_problem(scene, mode, cfg), G0)
        out.append(residual_metrics(G, scene.source, scene.target, scene.region, mode, "neural"))
    return out


def run_comparison(bundles, modes=DEFAULT_MODES, cfg: RunConfig = RunConfig(), prepared: dict | None = None) -> ComparisonResult:
    """Residual table over scenes x solvers x modes, with PIE/neural ratio rows.

    A scene that raises is recorded as a ``failed`` row and the run goes on.
    ``prepared`` may supply already fitted scenes keyed by bundle name.
    """
    res = ComparisonResult()
    for bundle in bundles:
        try:
            scene = (prepared or {}).get(bundle.name) or prepare_scene(bundle, cfg)
            reports = compare_scene(scene, tuple(modes), cfg)
        except Exception as exc:  # noqa: BLE001 - isolate per-scene failures
            log.error("scene %s failed: %s", bundle.name, exc)
            msg = str(exc).replace("\n", " ")
            res.failures[bundle.name] = msg
            res.rows.append(_csv_row(bundle.name, "", "", "", "", "", f"failed: {msg}"))
            continue
        for rep in reports:
            res.reports.append((bundle.name, rep))
            res.rows.append(_csv_row(bundle.name, rep.mode, rep.solver, _fmt(rep.grad), _fmt(rep.color), f"{rep.psnr_background:.4f}", "ok"))
        for mode in modes:
            p = next(r for r in reports if r.solver == "pie" and r.mode == mode)
            n = next(r for r in reports if r.solver == "neural" and r.mode == mode)
            res.rows.append(_csv_row(bundle.name, mode, "pie/neural", _ratio(p.grad, n.grad), _ratio(p.color, n.color), "", "ok"))
    return res


@dataclass
class AblationReport:
    scene: str
    global_mse: float
    boundary_mse: float
    global_image: np.ndarray = field(repr=False)
    boundary_image: np.ndarray = field(repr=False)

    @property
    def ratio(self) -> float:
        return self.global_mse / self.boundary_mse if self.boundary_mse > 0 else float("inf")

    def summary(self) -> str:
        return (
            f"scene={self.scene} global_background_mse={_fmt(self.global_mse)} "
            f"boundary_background_mse={_fmt(self.boundary_mse)} ratio={self.ratio:.4f}"
        )


def background_mse(image: np.ndarray, source: np.ndarray, region: MaskRegion) -> float:
    bg = ~region.omega
    d = (np.asarray(image, dtype=np.float64) - source)[bg]
    return float(np.mean(d * d))


def run_ablation(bundle: SceneBundle, cfg: RunConfig = RunConfig(), mode: GuidanceMode | None = None, prepared: PreparedScene | None = None) -> AblationReport:
    """Two blends differing only in the colour term: whole background vs a band."""
    scene = prepared or prepare_scene(bundle, cfg)
    mode = mode or bundle.mode
    G0 = warm_start(blend_problem(scene, mode, cfg))
    h, w = scene.source.shape[:2]
    images = {}
    for variant in ("global", "boundary"):
        G, _ = blend_2d(blend_problem(scene, mode, cfg, color_loss=variant), G0)
        images[variant] = render_image(G, h, w)
    return AblationReport(
        bundle.name,
        background_mse(images["global"], scene.source, scene.region),
        background_mse(images["boundary"], scene.source, scene.region),
        images["global"],
        images["boundary"],
    )
