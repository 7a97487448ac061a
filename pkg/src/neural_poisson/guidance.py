"""Guiding vector fields: max-magnitude selection or an affine mix of gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UsageError
from .inr import InrModel, spatial_jacobian


@dataclass(frozen=True)
class GuidanceMode:
    """``kind`` is ``"max"`` (per-component larger magnitude) or ``"affine"``.

    The affine form is ``mu * grad(source) + phi * grad(target)``.
    """

    kind: str = "affine"
    mu: float = 1.0
    phi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("max", "affine"):
            raise ConfigError(f"unknown guidance mode {self.kind!r}")
        if self.kind == "affine":
            if not (np.isfinite(self.mu) and np.isfinite(self.phi)):
                raise ConfigError("affine weights must be finite")
            if self.mu == 0.0 and self.phi == 0.0:
                raise ConfigError("affine weights (mu, phi) must not both be zero")

    @classmethod
    def parse(cls, text: str) -> "GuidanceMode":
        """Parse ``max``, ``affine`` or ``affine:mu,phi``."""
        text = text.strip().lower()
        if text == "max":
            return cls("max")
        if text == "affine":
            return cls("affine", 1.0, 1.0)
        if text.startswith("affine:"):
            try:
                mu, phi = (float(v) for v in text[7:].split(","))
            except ValueError as exc:
                raise ConfigError(f"cannot parse guidance mode {text!r}") from exc
            return cls("affine", mu, phi)
        raise ConfigError(f"cannot parse guidance mode {text!r}")

    def __str__(self) -> str:
        if self.kind == "max":
            return "max"
        return f"affine:{self.mu:g},{self.phi:g}"


def combine(grad_source: np.ndarray, grad_target: np.ndarray, mode: GuidanceMode):
    """Mix two gradient arrays of equal shape component by component.

    Returns ``(v, chose_source)``; ``chose_source`` is None in affine mode.
    In max mode a component comes from the source only when its magnitude
    is strictly larger, so ties go to the target.
    """
    if mode.kind == "max":
        chose = np.abs(grad_source) > np.abs(grad_target)
        return np.where(chose, grad_source, grad_target), chose
    return mode.mu * grad_source + mode.phi * grad_target, None


@dataclass
class GuidanceSamples:
    """Guidance at a batch of source-frame coordinates.

    ``v`` has shape ``(B, channels, axes)`` in units of the model's
    normalized coordinates; ``chose_source`` is set in max mode only.
    """

    coords: np.ndarray
    v: np.ndarray
    chose_source: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.coords)


def guidance_at(S: InrModel, T: InrModel, coords, offset, mode: GuidanceMode) -> GuidanceSamples:
    """Sample the guiding field from two fitted networks.

    ``offset`` translates source-frame coordinates into the target's frame
    (``x_target = x + offset``).  Both frames must be ``[-1, 1]^d``.
    """
    x = np.asarray(coords, dtype=np.float64)
    off = np.asarray(offset, dtype=np.float64).reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != off.shape[1]:
        raise UsageError("coords and offset dimensions disagree")
    xt = x + off
    if np.any(np.abs(x) > 1.0) or np.any(np.abs(xt) > 1.0):
        raise UsageError("guidance requested outside the [-1, 1] domain")
    js = spatial_jacobian(S, x).astype(np.float64)
    jt = spatial_jacobian(T, xt).astype(np.float64)
    v, chose = combine(js, jt, mode)
    return GuidanceSamples(coords=x, v=v, chose_source=chose)
