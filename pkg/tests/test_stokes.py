import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inhomns.errors import MeanConstraintViolated
from inhomns.initial import random_band_scalar, random_band_velocity
from inhomns.norms import l2_norm, lebesgue_norm, sobolev_norm
from inhomns.spectral import TorusGrid, divergence, gradient, inverse_laplacian, laplacian, leray_project
from inhomns.stokes import (
    bogovskii,
    bogovskii_ratios,
    pressure_operator,
    solve_stokes,
    stokes_estimate_ratio,
    wminus1p_norm,
)

seeds = st.integers(min_value=0, max_value=10_000)


def test_gradient_forcing(grid32):
    g = grid32
    f = np.stack([np.sin(g.X), np.zeros_like(g.X)])
    sol = solve_stokes(g, f)
    assert np.abs(sol.grad_q - f).max() < 1e-13
    assert np.abs(sol.w).max() < 1e-13
    assert np.abs(sol.q + np.cos(g.X)).max() < 1e-13


def test_zero(grid32):
    sol = solve_stokes(grid32, np.zeros((2, 32, 32)), np.zeros((32, 32)))
    assert not np.any(sol.w) and not np.any(sol.q)


def test_manufactured(grid64):
    g = grid64
    psi = random_band_scalar(g, 1, 6, seed=1)
    phi = random_band_scalar(g, 1, 6, seed=2)
    q_star = random_band_scalar(g, 1, 6, seed=3)
    w_star = gradient(g, phi) + np.stack([gradient(g, psi)[1], -gradient(g, psi)[0]])
    g_star = divergence(g, w_star)
    f = -laplacian(g, w_star) + gradient(g, q_star)
    sol = solve_stokes(g, f, g_star)
    assert l2_norm(g, sol.w - w_star) < 1e-10 * l2_norm(g, w_star)
    assert l2_norm(g, sol.q - q_star) < 1e-10 * l2_norm(g, q_star)
    mom, div = sol.residuals(g, f, g_star)
    assert mom < 1e-9 and div < 1e-9


def test_mean_constraint(grid16):
    with pytest.raises(MeanConstraintViolated):
        solve_stokes(grid16, np.zeros((2, 16, 16)), np.ones((16, 16)))


def test_force_mean_is_dropped(grid16):
    g = grid16
    f = np.stack([np.full((16, 16), 2.0), np.sin(g.Y)])
    sol = solve_stokes(g, f)
    assert np.allclose(sol.dropped_mean, [2.0, 0.0])
    assert sol.residuals(g, f, np.zeros((16, 16)))[0] < 1e-12


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    g = TorusGrid(32)
    rng = np.random.default_rng(seed)
    f1, f2 = rng.standard_normal((2, 2, 32, 32))
    s1, s2 = solve_stokes(g, f1), solve_stokes(g, f2)
    s = solve_stokes(g, a * f1 + b * f2)
    scale = max(l2_norm(g, s1.w), l2_norm(g, s2.w), 1.0) * (abs(a) + abs(b) + 1)
    assert l2_norm(g, s.w - (a * s1.w + b * s2.w)) <= 1e-11 * scale
    assert l2_norm(g, s.grad_q - (a * s1.grad_q + b * s2.grad_q)) <= 1e-11 * scale * 10


@pytest.mark.parametrize("k", [(1, 0), (2, 3), (5, 1)])
def test_single_mode_l2_estimate(grid64, k):
    g = grid64
    f = np.stack([np.sin(k[0] * g.X + k[1] * g.Y), 0.5 * np.cos(k[0] * g.X + k[1] * g.Y)])
    sol = solve_stokes(g, f)
    assert stokes_estimate_ratio(g, sol, f, np.zeros((64, 64)), 2) <= 1 + 1e-12


def test_estimate_ratio_p4_finite(grid64):
    g = grid64
    f = random_band_velocity(g, 1, 8, seed=4) + np.stack(gradient(g, random_band_scalar(g, 1, 8, seed=5)))
    sol = solve_stokes(g, f)
    assert 0 < stokes_estimate_ratio(g, sol, f, np.zeros((64, 64)), 4) < 10


def test_pressure_operator_is_gradient_part(grid32):
    g = grid32
    f = np.random.default_rng(0).standard_normal((2, 32, 32))
    # the Leray projector keeps the mean, so the two parts add up to f
    assert np.abs(pressure_operator(g, f) + leray_project(g, f) - f).max() < 1e-12


class TestBogovskii:
    def test_gradient_reproduced(self, grid32):
        g = grid32
        k = np.stack([np.sin(g.X), np.zeros_like(g.X)])
        assert np.abs(bogovskii(g, k) - k).max() < 1e-13

    def test_divergence_free_killed(self, grid32):
        k = random_band_velocity(grid32, 1, 8, seed=2)
        assert np.abs(bogovskii(grid32, k)).max() < 1e-13

    def test_requires_mean_free(self, grid16):
        with pytest.raises(MeanConstraintViolated):
            bogovskii(grid16, np.ones((2, 16, 16)))

    @given(seeds)
    def test_helmholtz(self, seed):
        g = TorusGrid(32)
        k = np.random.default_rng(seed).standard_normal((2, 32, 32))
        k -= k.mean(axis=(1, 2), keepdims=True)
        bk = bogovskii(g, k)
        assert np.abs(leray_project(g, k) + bk - k).max() < 1e-10
        assert np.abs(divergence(g, bk) - divergence(g, k)).max() < 1e-10 * g.n

    def test_ratios(self, grid64):
        g = grid64
        k = np.stack(gradient(g, random_band_scalar(g, 1, 6, seed=3)))
        r = bogovskii_ratios(g, k)
        assert r["lp_ratio"] == pytest.approx(1.0, rel=1e-12)
        assert r["gradient_ratio"] == pytest.approx(1.0, rel=1e-12)


class TestWMinus1p:
    def test_sin_p2(self, grid64):
        assert wminus1p_norm(grid64, np.sin(grid64.X), 2) == pytest.approx(math.pi * math.sqrt(2), rel=1e-12)

    def test_zero(self, grid32):
        assert wminus1p_norm(grid32, np.zeros((32, 32)), 4) == 0.0

    def test_sin_2x(self, grid64):
        g = grid64
        f = np.sin(2 * g.X)
        assert wminus1p_norm(g, f, 2) == pytest.approx(0.5 * l2_norm(g, f), rel=1e-12)

    @given(seeds)
    def test_p2_equals_hm1(self, seed):
        g = TorusGrid(32)
        f = random_band_scalar(g, 1, 12, seed)
        direct = l2_norm(g, gradient(g, inverse_laplacian(g, f)))
        assert wminus1p_norm(g, f, 2) == pytest.approx(sobolev_norm(g, f, -1), rel=1e-10)
        assert direct == pytest.approx(sobolev_norm(g, f, -1), rel=1e-10)

    def test_p4_riesz_formula(self, grid64):
        g = grid64
        f = random_band_scalar(g, 1, 6, seed=8)
        expected = lebesgue_norm(g, gradient(g, inverse_laplacian(g, f)), 4)
        assert wminus1p_norm(g, f, 4) == pytest.approx(expected, rel=1e-12)
