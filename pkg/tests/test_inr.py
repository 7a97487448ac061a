"""Coordinate networks: construction, evaluation, derivatives, fitting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from neural_poisson.errors import ConfigError, NumericError, UsageError
from neural_poisson.fit import FitOptions, bilinear_sample, fit_image, pixel_coords, psnr, render_image
from neural_poisson.inr import (
    ArchSpec,
    InrModel,
    default_image_arch,
    directional_derivative,
    evaluate,
    extend_levels,
    fd_spatial_jacobian,
    grid_node_coords,
    init_model,
    max_grid_levels,
    param_gradient,
    spatial_jacobian,
    value_and_jacobian,
)
from neural_poisson.optim import Schedule

SMALL_SINE = ArchSpec(input_dim=2, output_dim=3, hidden_layers=(32, 32), activation="sine", omega=3.0)
SMALL_GRID = ArchSpec(
    input_dim=2, output_dim=3, hidden_layers=(16,), activation="sine", omega=3.0,
    grid_resolution=(7, 5), latent_dim=3, grid_align="corner", grid_levels=2,
)
SMALL_RELU = ArchSpec(input_dim=2, output_dim=2, hidden_layers=(16, 16), activation="relu_pe", num_frequencies=3)


def linear_model(W, b) -> InrModel:
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    arch = ArchSpec(input_dim=W.shape[1], output_dim=W.shape[0], hidden_layers=())
    return InrModel(arch, [W], [np.asarray(b, dtype=np.float64)])


def random_coords(n, d=2, seed=0, lim=0.95):
    return np.random.default_rng(seed).uniform(-lim, lim, size=(n, d))


def fd_param_gradient(model, kind, coords, targets, h=1e-6):
    """Central differences of the loss over every parameter entry."""
    params = [p.copy() for p in model.parameters()]
    out = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        for j in range(p.size):
            vals = []
            for s in (1.0, -1.0):
                q = [a.copy() for a in params]
                q[i].flat[j] += s * h
                m = model.copy()
                m.set_parameters(q)
                vals.append(param_gradient(m, kind, coords, targets)[0])
            g.flat[j] = (vals[0] - vals[1]) / (2 * h)
        out.append(g)
    return np.concatenate([g.ravel() for g in out])


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


class TestArchSpec:
    def test_zero_width_rejected(self):
        with pytest.raises(ConfigError):
            init_model(ArchSpec(hidden_layers=(8, 0)), 0)

    @pytest.mark.parametrize("omega", [0.0, -1.0])
    def test_nonpositive_omega_rejected(self, omega):
        with pytest.raises(ConfigError):
            init_model(ArchSpec(omega=omega), 0)

    def test_grid_needs_two_nodes_per_axis(self):
        with pytest.raises(ConfigError):
            ArchSpec(grid_resolution=(1, 4)).validate()

    def test_unknown_activation(self):
        with pytest.raises(ConfigError):
            ArchSpec(activation="tanh").validate()

    def test_dict_round_trip(self):
        assert ArchSpec.from_dict(SMALL_GRID.to_dict()) == SMALL_GRID

    def test_level_resolutions_corner(self):
        arch = ArchSpec(grid_resolution=(257, 129), grid_align="corner", grid_levels=3)
        assert arch.level_resolutions() == [(257, 129), (129, 65), (65, 33)]

    def test_level_resolutions_center(self):
        arch = ArchSpec(grid_resolution=(16, 8), grid_levels=3)
        assert arch.level_resolutions() == [(16, 8), (8, 4), (4, 2)]

    def test_too_many_levels_rejected(self):
        with pytest.raises(ConfigError):
            ArchSpec(grid_resolution=(8, 8), grid_levels=4).validate()

    def test_max_grid_levels_keeps_coarsest_nine(self):
        arch = default_image_arch(128, 128)
        n = max_grid_levels(arch)
        assert n == 6
        res = ArchSpec(**{**arch.__dict__, "grid_levels": n}).level_resolutions()
        assert min(res[-1]) == 9


class TestInit:
    def test_same_seed_bitwise_identical(self):
        a, b = init_model(SMALL_GRID, 7), init_model(SMALL_GRID, 7)
        for p, q in zip(a.parameters(), b.parameters()):
            assert p.tobytes() == q.tobytes()

    def test_seed_changes_parameters(self):
        a, b = init_model(SMALL_SINE, 7), init_model(SMALL_SINE, 8)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_zero_weights_give_final_bias(self):
        m = init_model(SMALL_SINE, 0)
        m.set_parameters([np.zeros_like(p) for p in m.parameters()])
        m.biases[-1][:] = 0.5
        assert_array_equal(evaluate(m, random_coords(10)), 0.5)

    def test_sine_init_keeps_activations_alive(self):
        arch = ArchSpec(hidden_layers=(64, 64, 64), omega=30.0)
        m = init_model(arch, 0).astype(np.float64)
        y = evaluate(m, random_coords(2000))
        assert 1e-3 < y.std() < 10.0

    def test_grid_table_shape(self):
        m = init_model(SMALL_GRID, 0)
        assert m.table.shape == (7 * 5 + 4 * 3, 3)
        assert_array_equal(m.table[35:], 0.0)


class TestEvaluate:
    def test_affine_layer(self):
        m = linear_model([[1.0, 2.0]], [0.5])
        assert_allclose(evaluate(m, [[1.0, 1.0]]), [[3.5]])

    def test_dimension_mismatch(self):
        m = init_model(SMALL_SINE, 0)
        with pytest.raises(UsageError):
            evaluate(m, np.zeros((4, 3)))

    def test_non_finite_output_reports_index(self):
        m = linear_model([[1e308, 1e308]], [0.0])
        x = np.array([[0.0, 0.1], [0.9, 0.9]])
        with pytest.raises(NumericError) as info, np.errstate(over="ignore"):
            evaluate(m, x)
        assert info.value.index == 1

    def test_pure(self):
        m = init_model(SMALL_GRID, 1)
        x = random_coords(50)
        assert evaluate(m, x).tobytes() == evaluate(m, x).tobytes()
        assert spatial_jacobian(m, x).tobytes() == spatial_jacobian(m, x).tobytes()

    def _grid_model(self, align):
        arch = ArchSpec(input_dim=2, output_dim=2, hidden_layers=(8,), omega=2.0, grid_resolution=(5, 4), latent_dim=3, grid_align=align)
        m = init_model(arch, 3).astype(np.float64)
        m.table = np.random.default_rng(0).normal(size=m.table.shape)
        return m

    @staticmethod
    def _mlp(m, z):
        h = z
        for w, b in zip(m.weights[:-1], m.biases[:-1]):
            h = np.sin(m.arch.omega * (h @ w.T + b))
        return h @ m.weights[-1].T + m.biases[-1]

    @pytest.mark.parametrize("align", ["center", "corner"])
    def test_query_at_node_uses_its_latent(self, align):
        m = self._grid_model(align)
        nodes = grid_node_coords((5, 4), align)
        i, j = 2, 1
        x = nodes[i, j][None]
        z = m.table[i * 4 + j][None]
        assert_allclose(evaluate(m, x), self._mlp(m, z), atol=1e-12)

    @pytest.mark.parametrize("align", ["center", "corner"])
    def test_midpoint_uses_average_latent(self, align):
        m = self._grid_model(align)
        nodes = grid_node_coords((5, 4), align)
        x = (0.5 * (nodes[1, 2] + nodes[2, 2]))[None]
        z = (0.5 * (m.table[1 * 4 + 2] + m.table[2 * 4 + 2]))[None]
        assert_allclose(evaluate(m, x), self._mlp(m, z), atol=1e-12)

    @given(st.floats(-1, 1), st.floats(-1, 1))
    @settings(max_examples=50, deadline=None)
    def test_interpolation_weights_sum_to_one(self, x, y):
        m = self._grid_model("corner")
        m.table[:] = 1.0
        z1 = self._mlp(m, np.ones((1, 3)))
        assert_allclose(evaluate(m, [[x, y]]), z1, atol=1e-12)

    def test_extend_levels_same_function(self):
        arch = ArchSpec(hidden_layers=(8,), omega=3.0, grid_resolution=(17, 17), latent_dim=2, grid_align="corner")
        m = init_model(arch, 0)
        g = extend_levels(m, 3)
        assert g.arch.grid_levels == 3
        x = random_coords(64)
        assert_array_equal(evaluate(g, x), evaluate(m, x))

    def test_extend_levels_cannot_drop(self):
        m = init_model(SMALL_GRID, 0)
        with pytest.raises(UsageError):
            extend_levels(m, 1)


class TestSpatialJacobian:
    def test_affine_constant_jacobian(self):
        m = linear_model([[1.0, 2.0]], [0.0])
        J = spatial_jacobian(m, random_coords(10))
        assert_allclose(J, np.broadcast_to([[[1.0, 2.0]]], (10, 1, 2)))

    def test_single_sine_unit(self):
        omega, w = 2.5, 0.7
        arch = ArchSpec(input_dim=1, output_dim=1, hidden_layers=(1,), omega=omega)
        m = InrModel(arch, [np.array([[w]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
        x = np.linspace(-1, 1, 21)[:, None]
        assert_allclose(spatial_jacobian(m, x)[:, 0, 0], omega * w * np.cos(omega * w * x[:, 0]), atol=1e-12)

    @pytest.mark.parametrize("arch", [SMALL_SINE, SMALL_GRID, SMALL_RELU], ids=["sine", "grid", "relu_pe"])
    def test_matches_finite_differences(self, arch):
        m = init_model(arch, 5).astype(np.float64)
        if m.table is not None:
            m.table = m.table + np.random.default_rng(1).normal(scale=0.3, size=m.table.shape)
        x = random_coords(100, seed=2)
        J = spatial_jacobian(m, x)
        fd = fd_spatial_jacobian(m, x, h=1e-6 if arch is SMALL_RELU else 1e-4)
        assert rel_err(J, fd) <= 1e-3

    def test_directional_derivative_is_projection(self):
        m = init_model(SMALL_SINE, 0).astype(np.float64)
        x = random_coords(20)
        d = np.array([[0.6, 0.8]])
        assert_allclose(directional_derivative(m, x, d)[:, :, 0], spatial_jacobian(m, x) @ d[0], atol=1e-12)

    def test_fd_stencil_options(self):
        m = init_model(SMALL_SINE, 0).astype(np.float64)
        x = random_coords(20)
        d = np.array([[1.0, 1.0]]) / np.sqrt(2)
        exact = directional_derivative(m, x, d)
        fd = fd_spatial_jacobian(m, x, h=1e-3, directions=d, stencil=(-2.0, -1.0, 1.0, 2.0))
        assert rel_err(fd, exact) < 1e-6

    def test_value_and_jacobian_consistent(self):
        m = init_model(SMALL_GRID, 0)
        x = random_coords(16)
        y, J = value_and_jacobian(m, x)
        assert_array_equal(y, evaluate(m, x))
        assert_array_equal(J, spatial_jacobian(m, x))

    def test_relu_kink_uses_right_derivative(self):
        arch = ArchSpec(input_dim=1, output_dim=1, hidden_layers=(1,), activation="relu_pe", num_frequencies=0)
        m = InrModel(arch, [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
        assert spatial_jacobian(m, [[0.0]])[0, 0, 0] == 1.0


class TestParamGradient:
    def test_one_linear_neuron(self):
        m = linear_model([[1.0]], [0.0])
        loss, g = param_gradient(m, "value_match", [[1.0]], [[0.0]])
        assert loss == 1.0
        assert_allclose(g.arrays[0], [[2.0]])

    @pytest.mark.parametrize("kind", ["value_match", "gradient_match"])
    def test_self_targets_give_zero(self, kind):
        m = init_model(SMALL_GRID, 4)
        x = random_coords(32)
        t = evaluate(m, x) if kind == "value_match" else spatial_jacobian(m, x)
        loss, g = param_gradient(m, kind, x, t)
        assert loss == 0.0
        assert not np.any(g.flat())

    @pytest.mark.parametrize("kind", ["value_match", "gradient_match"])
    @pytest.mark.parametrize(
        "arch",
        [
            ArchSpec(input_dim=2, output_dim=2, hidden_layers=(6, 5), omega=2.0),
            ArchSpec(input_dim=2, output_dim=2, hidden_layers=(5,), omega=2.0, grid_resolution=(4, 3), latent_dim=2, grid_align="corner", grid_levels=2),
            ArchSpec(input_dim=2, output_dim=1, hidden_layers=(5,), activation="relu_pe", num_frequencies=2, grid_resolution=(3, 3), latent_dim=2),
        ],
        ids=["sine", "multilevel-grid", "relu-pe-grid"],
    )
    def test_matches_finite_differences(self, arch, kind):
        m = init_model(arch, 9).astype(np.float64)
        rng = np.random.default_rng(3)
        if m.table is not None:
            m.table = m.table + rng.normal(scale=0.3, size=m.table.shape)
        x = random_coords(12, seed=4)
        shape = (12, arch.output_dim) if kind == "value_match" else (12, arch.output_dim, 2)
        t = rng.normal(size=shape)
        _, g = param_gradient(m, kind, x, t)
        assert rel_err(g.flat(), fd_param_gradient(m, kind, x, t)) <= 1e-3

    def test_empty_targets(self):
        with pytest.raises(UsageError):
            param_gradient(init_model(SMALL_SINE, 0), "value_match", np.zeros((0, 2)), np.zeros((0, 3)))

    def test_wrong_target_size(self):
        with pytest.raises(UsageError):
            param_gradient(init_model(SMALL_SINE, 0), "gradient_match", np.zeros((2, 2)), np.zeros((2, 3)))

    def test_unknown_kind(self):
        with pytest.raises(UsageError):
            param_gradient(init_model(SMALL_SINE, 0), "huber", np.zeros((2, 2)), np.zeros((2, 3)))

    @given(st.floats(0.1, 10.0))
    @settings(max_examples=20, deadline=None)
    def test_loss_quadratic_in_residual_scale(self, k):
        m = init_model(SMALL_SINE, 0).astype(np.float64)
        x = random_coords(8)
        y = evaluate(m, x)
        r = np.random.default_rng(0).normal(size=y.shape)
        l1, _ = param_gradient(m, "value_match", x, y - r)
        lk, _ = param_gradient(m, "value_match", x, y - k * r)
        assert_allclose(lk, k * k * l1, rtol=1e-9)


class TestFit:
    def test_pixel_coords_are_centres(self):
        xy = pixel_coords(2, 4)
        assert_allclose(xy[:4, 0], [-0.75, -0.25, 0.25, 0.75])
        assert_allclose(xy[::4, 1], [-0.5, 0.5])

    def test_bilinear_sample_at_centres(self):
        img = np.random.default_rng(0).uniform(size=(6, 5, 3))
        assert_allclose(bilinear_sample(img, pixel_coords(6, 5)), img.reshape(-1, 3), atol=1e-12)

    def test_constant_gray_reaches_60db(self):
        img = np.full((16, 16, 3), 0.5)
        opts = FitOptions(Schedule(steps=200, lr=1e-3, lr_min=1e-5, log_every=20), jitter=False)
        m, trace = fit_image(init_model(ArchSpec(), 0), img, opts)
        assert psnr(render_image(m, 16, 16), img) >= 60.0
        assert trace[-1][0] <= 200

    def test_same_seed_identical_checkpoint(self):
        arch = default_image_arch(12, 12)
        img = np.random.default_rng(0).uniform(size=(12, 12, 3))
        opts = FitOptions(Schedule(steps=20, log_every=5), seed=3)
        a, _ = fit_image(init_model(arch, 1), img, opts)
        b, _ = fit_image(init_model(arch, 1), img, opts)
        for p, q in zip(a.parameters(), b.parameters()):
            assert p.tobytes() == q.tobytes()

    def test_target_psnr_stops_early(self):
        img = np.full((8, 8, 3), 0.25)
        _, trace = fit_image(
            init_model(ArchSpec(hidden_layers=(8,)), 0), img,
            FitOptions(Schedule(steps=500, lr=1e-2, log_every=10), target_psnr=30.0, jitter=False),
        )
        assert trace[-1][1] >= 30.0 and trace[-1][0] < 500

    def test_rejects_out_of_range_image(self):
        with pytest.raises(UsageError):
            fit_image(init_model(SMALL_SINE, 0), np.full((4, 4, 3), 1.5))

    def test_nan_aborts_with_step(self):
        m = init_model(SMALL_SINE, 0)
        m.biases[-1][:] = np.nan
        with pytest.raises(NumericError) as info:
            fit_image(m, np.zeros((4, 4, 3)), FitOptions(Schedule(steps=5)))
        assert info.value.index == 0


class TestPsnr:
    def test_identical_sentinel(self):
        a = np.random.default_rng(0).uniform(size=(4, 4, 3))
        assert psnr(a, a) == 99.0

    def test_unit_mse_is_zero_db(self):
        assert psnr(np.zeros((3, 3)), np.ones((3, 3))) == 0.0

    def test_uniform_offset(self):
        a = np.full((5, 5, 3), 0.3)
        assert_allclose(psnr(a, a + 0.1), 20.0, rtol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(UsageError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))
