"""Poisson blending with coordinate networks, a classical baseline and voxel radiance fields."""

from .classical import MaskRegion, pie_blend, solve_dirichlet
from .errors import ConfigError, NumericError, UsageError
from .fit import FitOptions, fit_image, psnr, render_image
from .guidance import GuidanceMode, combine, guidance_at
from .inr import ArchSpec, InrModel, default_image_arch, evaluate, init_model, param_gradient, spatial_jacobian
from .metrics import ResidualReport, residual_metrics
from .optim import Schedule
from .solver import BlendProblem, MetricsTrace, blend_2d

__all__ = [
    "ArchSpec",
    "BlendProblem",
    "ConfigError",
    "FitOptions",
    "GuidanceMode",
    "InrModel",
    "MaskRegion",
    "MetricsTrace",
    "NumericError",
    "ResidualReport",
    "Schedule",
    "UsageError",
    "blend_2d",
    "combine",
    "default_image_arch",
    "evaluate",
    "fit_image",
    "guidance_at",
    "init_model",
    "param_gradient",
    "pie_blend",
    "psnr",
    "render_image",
    "residual_metrics",
    "solve_dirichlet",
    "spatial_jacobian",
]
