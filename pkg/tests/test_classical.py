"""Discrete Poisson baseline: right-hand side, Dirichlet solve, composite."""

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from neural_poisson.classical import (
    MaskRegion,
    backward_div,
    build_rhs,
    conjugate_gradient,
    forward_diff,
    pie_blend,
    solve_dirichlet,
)
from neural_poisson.errors import UsageError
from neural_poisson.guidance import GuidanceMode, combine
from neural_poisson.scenes import bundled_scene

AFFINE_T = GuidanceMode("affine", 0.0, 1.0)


def grid(n, m=None):
    m = m or n
    yy, xx = np.mgrid[0:n, 0:m].astype(np.float64)
    return xx, yy


def dense_poisson_oracle(source, target, region, mode):
    """Independent dense solve of sum_q (f_q - f_p) = sum_q v_pq on the interior.

    ``v_pq`` mixes the source and target differences along the edge p->q;
    pixels outside the interior are fixed to the source.
    """
    s = np.asarray(source, float)
    t = region.target_in_source(target)
    om = region.omega
    h, w = om.shape
    out = s.copy()
    pix = list(zip(*np.nonzero(om)))
    index = {p: k for k, p in enumerate(pix)}
    for c in range(s.shape[2]):
        A = np.zeros((len(pix), len(pix)))
        b = np.zeros(len(pix))
        for k, (i, j) in enumerate(pix):
            for di, dj in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                q = (i + di, j + dj)
                vs = s[q][c] - s[i, j, c]
                vt = t[q][c] - t[i, j, c]
                v, _ = combine(np.array(vs), np.array(vt), mode)
                A[k, k] -= 1.0
                b[k] += v
                if q in index:
                    A[k, index[q]] += 1.0
                else:
                    b[k] -= s[q][c]
        x = np.linalg.solve(A, b)
        for k, p in enumerate(pix):
            out[p][c] = x[k]
    return out


def manufactured_error(n):
    """Max error of the discrete solve of lap f = -2 pi^2 f, f = sin(pi x) sin(pi y)."""
    h = 1.0 / n
    xs = np.arange(n + 1) * h
    X, Y = np.meshgrid(xs, xs)
    f = np.sin(np.pi * X) * np.sin(np.pi * Y)
    region = MaskRegion.rect((n + 1, n + 1), 1, 1, n, n)
    rhs = -2.0 * np.pi**2 * f * h * h
    res = solve_dirichlet(rhs, np.zeros_like(f), region, tol=1e-12, max_iter=20000)
    return np.max(np.abs(res.solution - f)[region.omega])


class TestMaskRegion:
    def test_boundary_is_four_connected_ring(self):
        r = MaskRegion.rect((8, 8), 3, 3, 5, 5)
        expected = np.zeros((8, 8), bool)
        expected[2, 3:5] = expected[5, 3:5] = expected[3:5, 2] = expected[3:5, 5] = True
        assert_array_equal(r.boundary, expected)

    def test_offset_moves_interior(self):
        r = MaskRegion.rect((10, 10), 2, 3, 4, 5, offset=(3, -1))
        assert_array_equal(np.argwhere(r.omega), [[2, 5], [2, 6], [3, 5], [3, 6]])

    def test_margin_required(self):
        with pytest.raises(UsageError):
            MaskRegion.rect((8, 8), 0, 2, 3, 4)

    def test_offset_out_of_bounds(self):
        with pytest.raises(UsageError):
            MaskRegion.rect((8, 8), 2, 2, 4, 4, offset=(4, 0))

    def test_empty_mask(self):
        with pytest.raises(UsageError):
            MaskRegion(np.zeros((5, 5), bool), (0, 0), (5, 5))

    def test_continuous_membership_exact_rectangle(self):
        r = MaskRegion.rect((32, 32), 8, 8, 24, 24)
        pts = np.random.default_rng(0).uniform(-1, 1, size=(5000, 2))
        inside = (np.abs(pts[:, 0]) < 0.5) & (np.abs(pts[:, 1]) < 0.5)
        # bilinear membership rounds the corners within one pixel of them
        corner = (np.abs(np.abs(pts) - 0.5) < 2 / 32).all(axis=1)
        assert_array_equal(r.contains(pts)[~corner], inside[~corner])
        assert_array_equal(r.pixel_contains(pts), inside)


class TestBuildRhs:
    def test_constant_images_zero(self):
        r = MaskRegion.rect((12, 12), 3, 3, 9, 9)
        s = np.full((12, 12, 3), 0.3)
        t = np.full((12, 12, 3), 0.7)
        for mode in (GuidanceMode("max"), GuidanceMode("affine", 1, 1)):
            assert_array_equal(build_rhs(s, t, r, mode), 0.0)

    def test_linear_target_divergence_free(self):
        xx, _ = grid(12)
        r = MaskRegion.rect((12, 12), 3, 3, 9, 9)
        rhs = build_rhs(np.zeros((12, 12)), xx / 12, r, AFFINE_T)
        assert_allclose(rhs, 0.0, atol=1e-15)

    def test_quadratic_target_divergence_two(self):
        xx, _ = grid(12)
        r = MaskRegion.rect((12, 12), 3, 3, 9, 9)
        rhs = build_rhs(np.zeros((12, 12)), xx**2, r, AFFINE_T)
        assert_allclose(rhs[r.omega], 2.0)
        assert_array_equal(rhs[~r.omega], 0.0)

    def test_max_mode_picks_larger_component(self):
        xx, yy = grid(12)
        r = MaskRegion.rect((12, 12), 3, 3, 9, 9)
        s, t = 3.0 * xx, 0.5 * yy**2
        mode = GuidanceMode("max")
        rhs = build_rhs(s, t, r, mode)
        # x component from the source (3 > 0), y component from the target (>= 0.5)
        assert_allclose(rhs[r.omega], 1.0)

    def test_shape_mismatch(self):
        r = MaskRegion.rect((12, 12), 3, 3, 9, 9)
        with pytest.raises(UsageError):
            build_rhs(np.zeros((10, 12)), np.zeros((12, 12)), r, AFFINE_T)

    def test_stencil_is_five_point_laplacian(self):
        f = np.random.default_rng(0).normal(size=(9, 9))
        lap = backward_div(*forward_diff(f))
        inner = f[1:-1, 1:-1]
        five = f[2:, 1:-1] + f[:-2, 1:-1] + f[1:-1, 2:] + f[1:-1, :-2] - 4 * inner
        assert_allclose(lap[1:-1, 1:-1], five[:, :], atol=1e-12)


class TestSolveDirichlet:
    def test_linear_boundary_harmonic(self):
        xx, _ = grid(20)
        r = MaskRegion.rect((20, 20), 2, 2, 18, 18)
        res = solve_dirichlet(np.zeros((20, 20)), xx, r)
        assert res.converged
        assert_allclose(res.solution, xx, atol=1e-6)

    def test_quadratic_recovered(self):
        xx, yy = grid(20)
        f = xx**2 + yy**2
        r = MaskRegion.rect((20, 20), 2, 2, 18, 18)
        res = solve_dirichlet(np.full((20, 20), 4.0), f, r)
        assert_allclose(res.solution, f, rtol=1e-7)

    def test_second_order_convergence(self):
        ratio = manufactured_error(32) / manufactured_error(64)
        assert 3.2 <= ratio <= 4.8

    def test_non_convergence_warns(self):
        xx, yy = grid(20)
        r = MaskRegion.rect((20, 20), 2, 2, 18, 18)
        with pytest.warns(RuntimeWarning):
            res = solve_dirichlet(np.full((20, 20), 4.0), xx**2 + yy**2, r, tol=1e-14, max_iter=2)
        assert not res.converged and res.iterations == 2 and res.residual > 1e-14

    def test_residual_history_decreases_overall(self):
        r = MaskRegion.rect((20, 20), 2, 2, 18, 18)
        res = solve_dirichlet(np.random.default_rng(0).normal(size=(20, 20)), np.zeros((20, 20)), r)
        assert res.history[-1] <= 1e-8 < res.history[0]

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_discrete_maximum_principle(self, seed):
        rng = np.random.default_rng(seed)
        b = rng.uniform(-2, 3, size=(10, 10))
        r = MaskRegion.rect((10, 10), 2, 2, 8, 8)
        sol = solve_dirichlet(np.zeros((10, 10)), b, r, tol=1e-12).solution
        ring = b[r.boundary]
        assert sol[r.omega].min() >= ring.min() - 1e-9
        assert sol[r.omega].max() <= ring.max() + 1e-9

    @given(st.integers(0, 2**31 - 1), st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, seed, alpha):
        rng = np.random.default_rng(seed)
        rhs, b = rng.normal(size=(10, 10)), rng.normal(size=(10, 10))
        r = MaskRegion.rect((10, 10), 2, 2, 8, 8)
        one = solve_dirichlet(rhs, b, r, tol=1e-13).solution
        scaled = solve_dirichlet(alpha * rhs, alpha * b, r, tol=1e-13).solution
        assert_allclose(scaled, alpha * one, atol=1e-9 * max(1.0, abs(alpha)))

    def test_zero_rhs_zero_boundary(self):
        r = MaskRegion.rect((6, 6), 2, 2, 4, 4)
        res = solve_dirichlet(np.zeros((6, 6)), np.zeros((6, 6)), r)
        assert res.iterations == 0 and np.all(res.solution == 0)

    def test_cg_matches_dense(self):
        rng = np.random.default_rng(1)
        M = rng.normal(size=(8, 8))
        A = M @ M.T + 8 * np.eye(8)
        b = rng.normal(size=8)
        import scipy.sparse as sp

        x, res, _, _ = conjugate_gradient(sp.csr_matrix(A), b, 1e-12, 100)
        assert_allclose(x, np.linalg.solve(A, b), atol=1e-9)


class TestPieBlend:
    def test_identity_blend(self):
        s = np.random.default_rng(0).uniform(size=(16, 16, 3))
        r = MaskRegion.rect((16, 16), 4, 4, 12, 12)
        assert_allclose(pie_blend(s, s, r, GuidanceMode("max")), s, atol=1e-7)

    def test_outside_region_bitwise_source(self):
        rng = np.random.default_rng(0)
        s, t = rng.uniform(size=(16, 16, 3)), rng.uniform(size=(16, 16, 3))
        r = MaskRegion.rect((16, 16), 4, 4, 12, 12, offset=(1, -2))
        out = pie_blend(s, t, r, GuidanceMode("affine", 1, 1))
        assert out[~r.omega].tobytes() == s[~r.omega].tobytes()

    @pytest.mark.parametrize("mode", [GuidanceMode("max"), GuidanceMode("affine", 1, 1)], ids=str)
    def test_matches_dense_direct_solve_on_ramp_scene(self, mode):
        bundle = bundled_scene("ramp")
        s, t = bundle.images()
        s, t = s[::4, ::4], t[::4, ::4]  # 32 x 32 instance
        m = np.zeros((32, 32), bool)
        m[12:20, 12:20] = True
        r = MaskRegion(m, (-2, 2), (32, 32))
        assert_allclose(pie_blend(s, t, r, mode, tol=1e-12), dense_poisson_oracle(s, t, r, mode), atol=1e-6)

    def test_single_channel(self):
        xx, _ = grid(12)
        r = MaskRegion.rect((12, 12), 3, 3, 9, 9)
        out = pie_blend(np.zeros((12, 12)), xx / 12, r, AFFINE_T)
        assert out.shape == (12, 12)

    def test_timing_at_128(self):
        t0 = time.perf_counter()
        manufactured_error(128)
        assert time.perf_counter() - t0 < 10.0
