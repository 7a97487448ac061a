"""Coordinate networks with exact spatial derivatives.

A model maps points of ``[-1, 1]^d`` to ``output_dim`` values through an
optional learnable interpolated grid of latents, an optional positional
encoding and a stack of affine layers with a pointwise activation.

Spatial derivatives are computed by pushing (value, tangent) pairs through
every layer, one tangent per input axis.  Parameter gradients for the two
supported objectives (value matching and derivative matching) are obtained
by a hand-written reverse sweep over that forward trace, which includes the
second-order terms the derivative-matching objective needs.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericError, UsageError

ACTIVATIONS = ("sine", "relu_pe")


@dataclass(frozen=True)
class ArchSpec:
    """Network architecture.

    ``grid_resolution`` enables the learnable grid encoding; it lists the
    number of nodes per input axis.  With ``grid_align="center"`` nodes sit
    at the centres of a regular partition of ``[-1, 1]`` (pixel centres for
    a grid matching the image); with ``"corner"`` they are evenly spaced
    including both ends, so ``2W + 1`` nodes cover every pixel centre and
    every pixel edge.

    ``grid_levels > 1`` adds coarser copies of the grid (node counts halved
    per level) whose interpolated latents are summed with the finest one.
    The coarse levels let smooth, large-scale changes move quickly during
    training.  All levels share one flat table of shape
    ``(total_nodes, latent_dim)``, finest level first.
    """

    input_dim: int = 2
    output_dim: int = 3
    hidden_layers: tuple[int, ...] = (64, 64, 64)
    activation: str = "sine"
    omega: float = 30.0
    num_frequencies: int = 6
    grid_resolution: tuple[int, ...] | None = None
    latent_dim: int = 2
    grid_align: str = "center"
    grid_levels: int = 1

    def validate(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be >= 1")
        if any(int(w) < 1 for w in self.hidden_layers):
            raise ConfigError(f"all hidden widths must be >= 1, got {self.hidden_layers}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.activation == "sine" and not self.omega > 0:
            raise ConfigError(f"sine activation needs omega > 0, got {self.omega}")
        if self.activation == "relu_pe" and self.num_frequencies < 0:
            raise ConfigError("num_frequencies must be >= 0")
        if self.grid_resolution is not None:
            if len(self.grid_resolution) != self.input_dim:
                raise ConfigError("grid_resolution needs one entry per input axis")
            if any(int(r) < 2 for r in self.grid_resolution):
                raise ConfigError(f"grid resolution must be >= 2 per axis, got {self.grid_resolution}")
            if self.latent_dim < 1:
                raise ConfigError("latent_dim must be >= 1")
            if self.grid_align not in ("center", "corner"):
                raise ConfigError(f"unknown grid alignment {self.grid_align!r}")
            if self.grid_levels < 1:
                raise ConfigError("grid_levels must be >= 1")
            if any(n < 2 for res in self.level_resolutions() for n in res):
                raise ConfigError(f"grid {self.grid_resolution} is too coarse for {self.grid_levels} levels")

    def level_resolutions(self) -> list[tuple[int, ...]]:
        """Node counts per axis for every grid level, finest first."""
        if self.grid_resolution is None:
            return []
        out = []
        for lv in range(self.grid_levels):
            f = 2**lv
            if self.grid_align == "corner":
                out.append(tuple((int(n) - 1) // f + 1 for n in self.grid_resolution))
            else:
                out.append(tuple(int(n) // f for n in self.grid_resolution))
        return out

    @property
    def grid_nodes(self) -> int:
        return sum(int(np.prod(r)) for r in self.level_resolutions())

    @property
    def feature_dim(self) -> int:
        """Width of the vector entering the first affine layer."""
        m = self.latent_dim if self.grid_resolution is not None else self.input_dim
        if self.activation == "relu_pe":
            m *= 1 + 2 * self.num_frequencies
        return m

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_layers": list(self.hidden_layers),
            "activation": self.activation,
            "omega": self.omega,
            "num_frequencies": self.num_frequencies,
            "grid_resolution": None if self.grid_resolution is None else list(self.grid_resolution),
            "latent_dim": self.latent_dim,
            "grid_align": self.grid_align,
            "grid_levels": self.grid_levels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        grid = d.get("grid_resolution")
        return cls(
            input_dim=int(d["input_dim"]),
            output_dim=int(d["output_dim"]),
            hidden_layers=tuple(int(w) for w in d["hidden_layers"]),
            activation=str(d["activation"]),
            omega=float(d.get("omega", 30.0)),
            num_frequencies=int(d.get("num_frequencies", 6)),
            grid_resolution=None if grid is None else tuple(int(r) for r in grid),
            latent_dim=int(d.get("latent_dim", 2)),
            grid_align=str(d.get("grid_align", "center")),
            grid_levels=int(d.get("grid_levels", 1)),
        )


@dataclass
class InrModel:
    arch: ArchSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    table: np.ndarray | None = None

    def parameters(self) -> list[np.ndarray]:
        """Parameters in checkpoint order: grid table, then (W, b) per layer."""
        out = [] if self.table is None else [self.table]
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_parameters(self, arrays: Sequence[np.ndarray]) -> None:
        arrays = list(arrays)
        if self.table is not None:
            self.table = arrays.pop(0)
        self.weights = arrays[0::2]
        self.biases = arrays[1::2]

    def copy(self) -> "InrModel":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "InrModel":
        m = self.copy()
        m.set_parameters([p.astype(dtype) for p in self.parameters()])
        return m

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


@dataclass
class ParamGradient:
    """Partial derivatives laid out like ``InrModel.parameters()``."""

    arrays: list[np.ndarray] = field(default_factory=list)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def __add__(self, other: "ParamGradient") -> "ParamGradient":
        return ParamGradient([a + b for a, b in zip(self.arrays, other.arrays)])


def default_image_arch(height: int, width: int, levels: int = 1) -> ArchSpec:
    """Grid-encoded sine network for an ``height x width`` image.

    The grid has a node on every pixel centre and every pixel edge.
    """
    return ArchSpec(
        input_dim=2,
        output_dim=3,
        hidden_layers=(64, 64),
        activation="sine",
        omega=3.0,
        grid_resolution=(2 * width + 1, 2 * height + 1),
        latent_dim=4,
        grid_align="corner",
        grid_levels=levels,
    )


def max_grid_levels(arch: ArchSpec, coarsest: int = 9) -> int:
    """Largest level count keeping at least ``coarsest`` nodes per axis."""
    if arch.grid_resolution is None:
        return 1
    lv = 1
    while True:
        trial = ArchSpec(**{**arch.__dict__, "grid_levels": lv + 1})
        if min(min(r) for r in trial.level_resolutions()) < coarsest:
            return lv
        lv += 1


def extend_levels(model: InrModel, levels: int) -> InrModel:
    """Copy of ``model`` with extra coarse grid levels whose latents are zero.

    The result computes exactly the same function as ``model``.
    """
    arch = model.arch
    if model.table is None:
        raise UsageError("extend_levels needs a grid-encoded model")
    if levels < arch.grid_levels:
        raise UsageError(f"cannot drop grid levels ({arch.grid_levels} -> {levels})")
    new_arch = ArchSpec(**{**arch.__dict__, "grid_levels": levels})
    new_arch.validate()
    out = model.copy()
    pad = np.zeros((new_arch.grid_nodes - arch.grid_nodes, arch.latent_dim), dtype=model.dtype)
    out.arch = new_arch
    out.table = np.concatenate([model.table, pad])
    return out


def grid_node_coords(resolution: Sequence[int], align: str = "center") -> np.ndarray:
    """Normalized coordinates of every grid node, shape ``(*resolution, d)``."""
    if align == "corner":
        axes = [np.linspace(-1.0, 1.0, n) for n in resolution]
    else:
        axes = [-1.0 + (2.0 * np.arange(n) + 1.0) / n for n in resolution]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def init_model(arch: ArchSpec, seed: int, dtype=np.float32) -> InrModel:
    """Draw initial parameters; identical for identical ``(arch, seed)``.

    Sine layers use the variance-scaled uniform scheme of sinusoidal
    networks: the first layer ``U(-1/n, 1/n)``, deeper layers
    ``U(-sqrt(6/n)/omega, sqrt(6/n)/omega)``.  ReLU layers use He-uniform.
    The grid latents start at the node coordinates so an untrained
    grid-encoded network behaves like the plain network.
    """
    arch.validate()
    rng = np.random.default_rng(seed)
    widths = [arch.feature_dim, *arch.hidden_layers, arch.output_dim]
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        if arch.activation == "sine":
            bound = 1.0 / n_in if i == 0 else np.sqrt(6.0 / n_in) / arch.omega
            w = rng.uniform(-bound, bound, size=(n_out, n_in))
            b = rng.uniform(-1.0 / np.sqrt(n_in), 1.0 / np.sqrt(n_in), size=n_out)
        else:
            bound = np.sqrt(6.0 / n_in)
            w = rng.uniform(-bound, bound, size=(n_out, n_in))
            b = np.zeros(n_out)
        if i == len(widths) - 2:
            b = np.zeros(n_out)
        weights.append(w.astype(dtype))
        biases.append(b.astype(dtype))
    table = None
    if arch.grid_resolution is not None:
        res = tuple(arch.grid_resolution)
        table = np.zeros((arch.grid_nodes, arch.latent_dim), dtype=dtype)
        k = min(arch.latent_dim, arch.input_dim)
        n0 = int(np.prod(res))
        table[:n0, :k] = grid_node_coords(res, arch.grid_align).reshape(n0, -1)[:, :k]
    return InrModel(arch=arch, weights=weights, biases=biases, table=table)


# ---------------------------------------------------------------------------
# forward trace
# ---------------------------------------------------------------------------


def _as_coords(model: InrModel, coords) -> np.ndarray:
    x = np.asarray(coords)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.arch.input_dim:
        raise UsageError(
            f"coordinate batch of shape {np.shape(coords)} does not match input_dim={model.arch.input_dim}"
        )
    if not np.all(np.isfinite(x)):
        raise UsageError("coordinates must be finite")
    return x.astype(model.dtype, copy=False)


def _grid_weights(model: InrModel, x: np.ndarray, with_derivs: bool):
    """Corner indices into the flat table, multilinear weights and their
    derivatives w.r.t. x, concatenated over all grid levels.

    Queries beyond the outermost nodes are clamped to the border (zero
    derivative there).  Exactly on a node the cell to the right is used,
    which makes the derivative the right derivative.
    """
    idx, w, dw = [], [], []
    offset = 0
    for res in model.arch.level_resolutions():
        li, lw, ldw = _level_weights(res, model.arch.grid_align == "corner", x, with_derivs)
        idx += [i + offset for i in li]
        w += lw
        dw += ldw
        offset += int(np.prod(res))
    return idx, w, dw


def _level_weights(res, corner: bool, x: np.ndarray, with_derivs: bool):
    d = len(res)
    base, frac, dfrac = [], [], []
    for a, n in enumerate(res):
        scale = 0.5 * (n - 1) if corner else 0.5 * n
        s = (x[:, a] + 1.0) * scale if corner else ((x[:, a] + 1.0) * n - 1.0) * 0.5
        inside = (s >= 0) & (s <= n - 1)
        s = np.clip(s, 0, n - 1)
        i0 = np.minimum(np.floor(s).astype(np.int64), n - 2)
        base.append(i0)
        frac.append(s - i0)
        dfrac.append(np.where(inside, scale, 0.0).astype(x.dtype))
    idx, w, dw = [], [], []
    for c in range(2**d):
        bits = [(c >> a) & 1 for a in range(d)]
        flat = np.zeros(x.shape[0], dtype=np.int64)
        for a, n in enumerate(res):
            flat = flat * n + base[a] + bits[a]
        factors = [frac[a] if bits[a] else 1.0 - frac[a] for a in range(d)]
        weight = np.prod(factors, axis=0)
        idx.append(flat)
        w.append(weight)
        if with_derivs:
            parts = []
            for k in range(d):
                sign = 1.0 if bits[k] else -1.0
                other = [factors[a] for a in range(d) if a != k]
                prod = np.prod(other, axis=0) if other else np.ones_like(weight)
                parts.append(sign * dfrac[k] * prod)
            dw.append(np.stack(parts))  # (d, B)
    return idx, w, dw


def _activation(arch: ArchSpec, a: np.ndarray, order: int):
    if arch.activation == "sine":
        om = arch.omega
        s = np.sin(om * a)
        if order == 0:
            return s, None, None
        c = np.cos(om * a)
        return s, om * c, (-om * om) * s
    val = np.maximum(a, 0)
    if order == 0:
        return val, None, None
    # right derivative at the kink
    d1 = (a >= 0).astype(a.dtype)
    return val, d1, np.zeros_like(a)


class _Trace:
    """Intermediate arrays of one forward pass."""


def _forward(model: InrModel, x: np.ndarray, directions: np.ndarray | None) -> _Trace:
    """Forward pass; ``directions`` (k, d) seeds k tangent channels."""
    arch = model.arch
    tr = _Trace()
    tr.x = x
    tr.dirs = directions
    want_t = directions is not None
    if model.table is not None:
        idx, w, dw = _grid_weights(model, x, with_derivs=want_t)
        tab = model.table.reshape(-1, arch.latent_dim)
        z = np.zeros((x.shape[0], arch.latent_dim), dtype=x.dtype)
        zt = np.zeros((len(directions), x.shape[0], arch.latent_dim), dtype=x.dtype) if want_t else None
        for c in range(len(idx)):
            corner = tab[idx[c]]
            z += w[c][:, None] * corner
            if want_t:
                # directional derivative of the corner weight along each seed
                dirw = directions.astype(x.dtype) @ dw[c]  # (k, B)
                zt += dirw[:, :, None] * corner[None]
        tr.grid = (idx, w, dw)
    else:
        z = x
        zt = None
        if want_t:
            zt = np.broadcast_to(directions.astype(x.dtype)[:, None, :], (len(directions), *x.shape))
        tr.grid = None
    tr.z, tr.zt = z, zt

    h, ht = z, zt
    tr.pe = None
    if arch.activation == "relu_pe" and arch.num_frequencies > 0:
        freqs = (2.0 ** np.arange(arch.num_frequencies) * np.pi).astype(x.dtype)
        arg = z[:, :, None] * freqs
        sn, cs = np.sin(arg), np.cos(arg)
        B = z.shape[0]
        h = np.concatenate([z, sn.reshape(B, -1), cs.reshape(B, -1)], axis=1)
        if want_t:
            d_sin = (cs * freqs).reshape(B, -1)
            d_cos = (-sn * freqs).reshape(B, -1)
            zt_rep = np.repeat(zt, arch.num_frequencies, axis=2)
            ht = np.concatenate([zt, d_sin[None] * zt_rep, d_cos[None] * zt_rep], axis=2)
        tr.pe = (freqs, sn, cs)

    layers = []
    order = 1 if want_t else 0
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = h @ w.T + b
        s, d1, d2 = _activation(arch, a, order)
        if want_t:
            at = ht @ w.T
            new_ht = d1[None] * at
        else:
            at = new_ht = None
        layers.append((h, ht, a, at, d1, d2))
        h, ht = s, new_ht
    tr.layers = layers
    tr.h, tr.ht = h, ht
    tr.y = h @ model.weights[-1].T + model.biases[-1]
    tr.yt = ht @ model.weights[-1].T if want_t else None
    return tr


def _backward(model: InrModel, tr: _Trace, gy: np.ndarray | None, gyt: np.ndarray | None) -> ParamGradient:
    """Reverse sweep; ``gy`` is dL/dy (B, out), ``gyt`` is dL/dy_tangent (k, B, out)."""
    arch = model.arch
    nl = len(model.weights)
    gW = [None] * nl
    gb = [None] * nl
    has_t = gyt is not None
    B = tr.y.shape[0]
    if gy is None:
        gy = np.zeros_like(tr.y)

    w_out = model.weights[-1]
    gW[-1] = gy.T @ tr.h
    if has_t:
        k = gyt.shape[0]
        gW[-1] = gW[-1] + gyt.reshape(k * B, -1).T @ tr.ht.reshape(k * B, -1)
    gb[-1] = gy.sum(axis=0)
    gh = gy @ w_out
    ght = gyt @ w_out if has_t else None

    for li in range(nl - 2, -1, -1):
        h_prev, ht_prev, a, at, d1, d2 = tr.layers[li]
        if d1 is None:
            _, d1, d2 = _activation(arch, a, 1)
        ga = gh * d1
        if has_t:
            ga = ga + (ght * at).sum(axis=0) * d2
            gat = ght * d1[None]
        w = model.weights[li]
        gW[li] = ga.T @ h_prev
        if has_t:
            k = gat.shape[0]
            gW[li] = gW[li] + gat.reshape(k * B, -1).T @ ht_prev.reshape(k * B, -1)
        gb[li] = ga.sum(axis=0)
        gh = ga @ w
        ght = gat @ w if has_t else None

    grads = []
    if model.table is not None:
        gz, gzt = gh, ght
        if tr.pe is not None:
            gz, gzt = _pe_backward(arch, tr, gh, ght)
        grads.append(_grid_backward(model, tr, gz, gzt))
    for w, b in zip(gW, gb):
        grads.extend((w, b))
    return ParamGradient(grads)


def _pe_backward(arch: ArchSpec, tr: _Trace, gh, ght):
    freqs, sn, cs = tr.pe
    m = tr.z.shape[1]
    L = arch.num_frequencies
    B = tr.z.shape[0]
    g_id = gh[:, :m]
    g_sin = gh[:, m : m + m * L].reshape(B, m, L)
    g_cos = gh[:, m + m * L :].reshape(B, m, L)
    gz = g_id + (g_sin * cs * freqs).sum(-1) - (g_cos * sn * freqs).sum(-1)
    gzt = None
    if ght is not None:
        k = ght.shape[0]
        t_id = ght[:, :, :m]
        t_sin = ght[:, :, m : m + m * L].reshape(k, B, m, L)
        t_cos = ght[:, :, m + m * L :].reshape(k, B, m, L)
        zt = tr.zt
        gzt = t_id + (t_sin * (cs * freqs)).sum(-1) - (t_cos * (sn * freqs)).sum(-1)
        f2 = freqs * freqs
        gz = gz + (zt * ((-t_sin * sn * f2) - (t_cos * cs * f2)).sum(-1)).sum(axis=0)
    return gz, gzt


def _grid_backward(model: InrModel, tr: _Trace, gz, gzt) -> np.ndarray:
    idx, w, dw = tr.grid
    L = model.arch.latent_dim
    n_nodes = model.table.size // L
    out = np.zeros((n_nodes, L), dtype=np.float64)
    for c in range(len(idx)):
        contrib = w[c][:, None] * gz
        if gzt is not None:
            # gzt is taken along the seeds used in the forward pass
            dirw = tr.dirs.astype(tr.x.dtype) @ dw[c]
            contrib = contrib + np.einsum("kb,kbl->bl", dirw, gzt)
        for l in range(L):
            out[:, l] += np.bincount(idx[c], weights=contrib[:, l], minlength=n_nodes)
    return out.astype(model.dtype)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _check_finite(values: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite {what} at batch index {i}", index=i)


def _axis_directions(d: int) -> np.ndarray:
    return np.eye(d)


def evaluate(model: InrModel, coords) -> np.ndarray:
    """Values at a batch of coordinates, shape ``(B, output_dim)``."""
    x = _as_coords(model, coords)
    y = _forward(model, x, None).y
    _check_finite(y, "output")
    return y


def spatial_jacobian(model: InrModel, coords) -> np.ndarray:
    """Exact ``d output / d coord`` per point, shape ``(B, output_dim, input_dim)``.

    ReLU networks use the right derivative at kinks.
    """
    x = _as_coords(model, coords)
    tr = _forward(model, x, _axis_directions(model.arch.input_dim))
    _check_finite(tr.yt, "derivative")
    return np.ascontiguousarray(np.transpose(tr.yt, (1, 2, 0)))


def directional_derivative(model: InrModel, coords, directions) -> np.ndarray:
    """Derivatives along arbitrary directions, shape ``(B, output_dim, k)``."""
    x = _as_coords(model, coords)
    dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if dirs.shape[1] != model.arch.input_dim:
        raise UsageError("direction dimension does not match input_dim")
    tr = _forward(model, x, dirs)
    return np.ascontiguousarray(np.transpose(tr.yt, (1, 2, 0)))


def value_and_jacobian(model: InrModel, coords) -> tuple[np.ndarray, np.ndarray]:
    x = _as_coords(model, coords)
    tr = _forward(model, x, _axis_directions(model.arch.input_dim))
    return tr.y, np.ascontiguousarray(np.transpose(tr.yt, (1, 2, 0)))


class ForwardPass:
    """A recorded forward evaluation that can be pulled back to parameters.

    Used by the training loops, which combine several loss terms before
    running the reverse sweep.
    """

    def __init__(self, model: InrModel, coords, with_jacobian: bool):
        self.model = model
        x = _as_coords(model, coords)
        dirs = _axis_directions(model.arch.input_dim) if with_jacobian else None
        self._trace = _forward(model, x, dirs)

    @property
    def values(self) -> np.ndarray:
        return self._trace.y

    @property
    def jacobian(self) -> np.ndarray:
        """``(B, out, in)`` view of the tangents."""
        return np.transpose(self._trace.yt, (1, 2, 0))

    def pullback(self, d_values=None, d_jacobian=None) -> ParamGradient:
        """Parameter gradient given adjoints of values and/or the jacobian."""
        dt = self.model.dtype
        gy = None if d_values is None else np.asarray(d_values, dtype=dt)
        gyt = None
        if d_jacobian is not None:
            if self._trace.yt is None:
                raise UsageError("forward pass was recorded without jacobian")
            gyt = np.ascontiguousarray(np.transpose(np.asarray(d_jacobian, dtype=dt), (2, 0, 1)))
        return _backward(self.model, self._trace, gy, gyt)


def param_gradient(model: InrModel, kind: str, coords, targets) -> tuple[float, ParamGradient]:
    """Loss and exact parameter gradient for one of the two fitting kernels.

    ``kind="value_match"``: loss = mean_b ||f(x_b) - t_b||^2 with targets of
    shape ``(B, out)``.  ``kind="gradient_match"``: loss =
    mean_b ||J_f(x_b) - t_b||_F^2 with targets ``(B, out, in)`` (or the
    flattened ``(B, out*in)``).  The loss is accumulated in float64.
    """
    x = _as_coords(model, coords)
    if x.shape[0] == 0:
        raise UsageError("param_gradient needs at least one target")
    t = np.asarray(targets, dtype=np.float64)
    B = x.shape[0]
    arch = model.arch
    if kind == "value_match":
        if t.shape != (B, arch.output_dim):
            raise UsageError(f"value targets must have shape {(B, arch.output_dim)}, got {t.shape}")
        fp = ForwardPass(model, x, with_jacobian=False)
        r = fp.values.astype(np.float64) - t
        loss = float(np.sum(r * r) / B)
        if not np.isfinite(loss):
            raise NumericError("non-finite loss")
        return loss, fp.pullback(d_values=2.0 * r / B)
    if kind == "gradient_match":
        shape = (B, arch.output_dim, arch.input_dim)
        if t.size != B * arch.output_dim * arch.input_dim:
            raise UsageError(f"gradient targets must have {shape[1] * shape[2]} entries per coordinate")
        t = t.reshape(shape)
        fp = ForwardPass(model, x, with_jacobian=True)
        r = fp.jacobian.astype(np.float64) - t
        loss = float(np.sum(r * r) / B)
        if not np.isfinite(loss):
            raise NumericError("non-finite loss")
        return loss, fp.pullback(d_jacobian=2.0 * r / B)
    raise UsageError(f"unknown objective kind {kind!r}")


def fd_spatial_jacobian(model: InrModel, coords, h: float = 1e-4, directions=None, stencil=(-1.0, 1.0)) -> np.ndarray:
    """Finite-difference directional derivatives, for cross-checking.

    ``stencil`` lists the offsets (in units of ``h``) of an antisymmetric
    first-derivative stencil; the default is the central difference.
    ``directions`` defaults to the coordinate axes.  Returns
    ``(B, output_dim, k)``.
    """
    x = _as_coords(model, coords).astype(np.float64)
    m64 = model.astype(np.float64)
    dirs = np.eye(model.arch.input_dim) if directions is None else np.atleast_2d(np.asarray(directions, float))
    offs = np.asarray(stencil, dtype=np.float64)
    # weights of the lowest-order antisymmetric stencil through the offsets
    V = np.vander(offs, len(offs), increasing=True).T
    rhs = np.zeros(len(offs))
    rhs[1] = 1.0
    coef = np.linalg.solve(V, rhs)
    out = np.zeros((x.shape[0], model.arch.output_dim, len(dirs)))
    for k, d in enumerate(dirs):
        for o, c in zip(offs, coef):
            if c != 0.0:
                out[:, :, k] += c * _forward(m64, x + o * h * d, None).y
        out[:, :, k] /= h
    return out
