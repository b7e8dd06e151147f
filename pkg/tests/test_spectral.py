import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inhomns.errors import BandOutOfRange
from inhomns.initial import random_band_scalar, random_band_velocity
from inhomns.spectral import (
    ScalarField,
    TorusGrid,
    VectorField,
    dealias,
    derivative,
    divergence,
    gradient,
    gradient_project,
    inverse_laplacian,
    laplacian,
    leray_project,
    lp_block,
    lp_range,
    lp_symbol,
    mean,
    product,
)

seeds = st.integers(min_value=0, max_value=10_000)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestGrid:
    def test_rejects_small_or_odd(self):
        with pytest.raises(ValueError):
            TorusGrid(6)
        with pytest.raises(ValueError):
            TorusGrid(17)
        with pytest.raises(ValueError):
            TorusGrid(16, length=0.0)

    def test_quadrature_weight(self):
        g = TorusGrid(32, length=3.0)
        assert g.quadrature_weight == pytest.approx((3.0 / 32) ** 2)
        assert g.integrate(np.ones((32, 32))) == pytest.approx(9.0)

    def test_wavenumbers_scale_with_length(self):
        g = TorusGrid(16, length=math.pi)
        assert g.kmin == pytest.approx(2.0)
        assert g.kx[1, 0] == pytest.approx(2.0)

    @given(seeds)
    def test_roundtrip(self, seed):
        g = TorusGrid(32)
        f = np.random.default_rng(seed).standard_normal((32, 32))
        assert rel(g.ifft(g.fft(f)), f) < 1e-12

    @given(seeds)
    def test_parseval(self, seed):
        g = TorusGrid(32, length=1.7)
        f = np.random.default_rng(seed).standard_normal((2, 32, 32))
        physical = g.inner(f, f)
        spectral = g.spectral_norm2(g.fft(f))
        assert abs(physical - spectral) <= 1e-10 * physical

    def test_equality_and_hash(self):
        assert TorusGrid(16) == TorusGrid(16)
        assert TorusGrid(16) != TorusGrid(16, 1.0)
        assert len({TorusGrid(16), TorusGrid(16)}) == 1


class TestFields:
    def test_scalar_field_spectral_consistent(self, grid32):
        vals = np.sin(grid32.X) * np.cos(2 * grid32.Y)
        f = ScalarField(grid32, vals)
        assert rel(grid32.ifft(f.spectral), vals) < 1e-12

    def test_scalar_field_is_read_only(self, grid16):
        f = ScalarField(grid16, np.zeros((16, 16)))
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0

    def test_shape_checked(self, grid16):
        with pytest.raises(ValueError):
            ScalarField(grid16, np.zeros((8, 8)))

    def test_vector_components_share_grid(self, grid16):
        with pytest.raises(ValueError):
            VectorField(ScalarField(grid16, np.zeros((16, 16))), ScalarField(TorusGrid(16, 1.0), np.zeros((16, 16))))

    def test_field_in_field_out(self, grid32):
        f = ScalarField(grid32, np.sin(grid32.X))
        out = derivative(grid32, f, 1)
        assert isinstance(out, ScalarField)
        w = VectorField.from_array(grid32, np.stack([np.sin(grid32.Y), np.cos(grid32.X)]))
        assert isinstance(leray_project(grid32, w), VectorField)


class TestDerivative:
    def test_sin_x(self, grid32):
        g = grid32
        assert np.abs(derivative(g, np.sin(g.X), 1) - np.cos(g.X)).max() < 1e-12

    def test_constant(self, grid32):
        for axis in (1, 2):
            for order in (1, 2):
                assert np.abs(derivative(grid32, np.full((32, 32), 3.0), axis, order)).max() < 1e-13

    def test_second_order_mixed_mode(self, grid32):
        g = grid32
        f = np.sin(g.X + 2 * g.Y)
        assert np.abs(derivative(g, f, 2, 2) + 4 * f).max() < 1e-11

    def test_invalid_axis(self, grid16):
        with pytest.raises(ValueError):
            derivative(grid16, np.zeros((16, 16)), 3)

    @given(seeds)
    def test_first_derivative_has_zero_mean(self, seed):
        g = TorusGrid(16)
        f = np.random.default_rng(seed).standard_normal((16, 16))
        assert abs(mean(derivative(g, f, 1))) < 1e-14
        assert abs(mean(derivative(g, f, 2))) < 1e-14

    def test_scaled_torus(self):
        g = TorusGrid(32, length=1.0)
        f = np.sin(2 * math.pi * g.X)
        assert np.abs(derivative(g, f, 1) - 2 * math.pi * np.cos(2 * math.pi * g.X)).max() < 1e-11


class TestLeray:
    def test_gradient_annihilated(self, grid32):
        g = grid32
        w = np.stack([np.cos(g.X), np.zeros_like(g.X)])
        assert np.abs(leray_project(g, w)).max() < 1e-13

    def test_divergence_free_unchanged(self, grid32):
        g = grid32
        w = np.stack([np.sin(g.Y), np.zeros_like(g.X)])
        assert np.abs(leray_project(g, w) - w).max() < 1e-13

    def test_single_mode_projection(self, grid32):
        g = grid32
        s = np.sin(g.X + g.Y)
        out = leray_project(g, np.stack([s, np.zeros_like(s)]))
        assert np.abs(out - np.stack([0.5 * s, -0.5 * s])).max() < 1e-13

    @given(seeds)
    def test_properties(self, seed):
        g = TorusGrid(32)
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((2, 32, 32))
        phi = rng.standard_normal((32, 32))
        pw = leray_project(g, w)
        norm_w = math.sqrt(g.inner(w, w))
        assert math.sqrt(g.inner(divergence(g, pw), divergence(g, pw))) < 1e-11 * norm_w * g.n
        again = leray_project(g, pw)
        assert math.sqrt(g.inner(again - pw, again - pw)) <= 1e-11 * norm_w
        gphi = gradient(g, phi)
        assert abs(g.inner(pw, gphi)) <= 1e-10 * norm_w * math.sqrt(g.inner(gphi, gphi))
        assert np.allclose(mean(pw), mean(w), atol=1e-13)
        assert rel(pw + gradient_project(g, w), w) < 1e-12


class TestLittlewoodPaley:
    def test_range_at_64(self, grid64):
        assert lp_range(grid64) == (0, 6)

    def test_out_of_range(self, grid64):
        with pytest.raises(BandOutOfRange):
            lp_block(grid64, np.zeros((64, 64)), 7)
        with pytest.raises(BandOutOfRange):
            lp_symbol(grid64, -1)

    def test_unit_mode_is_single_block(self, grid32):
        g = grid32
        f = np.sin(g.X)
        assert np.abs(lp_block(g, f, 0) - f).max() < 1e-13
        jmin, jmax = lp_range(g)
        for j in range(1, jmax + 1):
            assert np.abs(lp_block(g, f, j)).max() < 1e-13

    def test_constant_killed(self, grid32):
        jmin, jmax = lp_range(grid32)
        for j in range(jmin, jmax + 1):
            assert np.abs(lp_block(grid32, np.full((32, 32), 2.0), j)).max() < 1e-14

    def test_symbol_support(self, grid64):
        for j in range(1, 6):
            sym = lp_symbol(grid64, j)
            r = grid64.kmag
            assert np.all(sym[(r <= 2.0 ** (j - 1)) | (r >= 2.0 ** (j + 1))] == 0)
            assert np.all(sym >= 0) and np.all(sym <= 1)

    @given(seeds)
    def test_partition_of_unity(self, seed):
        g = TorusGrid(32)
        f = np.random.default_rng(seed).standard_normal((2, 32, 32))
        jmin, jmax = lp_range(g)
        total = sum(lp_block(g, f, j) for j in range(jmin, jmax + 1)) + mean(f)[:, None, None]
        assert np.abs(total - f).max() < 1e-10

    @given(seeds, st.integers(min_value=0, max_value=4))
    def test_commutes_with_derivative(self, seed, j):
        g = TorusGrid(32)
        f = np.random.default_rng(seed).standard_normal((32, 32))
        a = derivative(g, lp_block(g, f, j), 1)
        b = lp_block(g, derivative(g, f, 1), j)
        assert np.abs(a - b).max() <= 1e-12 * max(np.abs(a).max(), 1.0)


class TestInverseLaplacian:
    def test_cos(self, grid32):
        g = grid32
        assert np.abs(inverse_laplacian(g, np.cos(g.X)) + np.cos(g.X)).max() < 1e-13

    def test_zero(self, grid32):
        assert np.abs(inverse_laplacian(grid32, np.zeros((32, 32)))).max() == 0

    def test_sin_2x(self, grid32):
        g = grid32
        assert np.abs(inverse_laplacian(g, np.sin(2 * g.X)) + 0.25 * np.sin(2 * g.X)).max() < 1e-13

    @given(seeds)
    def test_inverts_laplacian(self, seed):
        g = TorusGrid(32)
        f = np.random.default_rng(seed).standard_normal((32, 32)) + 5.0
        q = inverse_laplacian(g, f)
        assert abs(mean(q)) < 1e-13
        assert rel(laplacian(g, q), f - f.mean()) < 1e-10


class TestProducts:
    def test_dealiased_product_exact_for_low_bands(self, grid64):
        g = grid64
        f = random_band_scalar(g, 1, 10, seed=1)
        h = random_band_scalar(g, 1, 10, seed=2)
        # combined bandwidth 20 stays below the 2/3 cutoff, so nothing is removed
        assert np.abs(product(g, f, h) - f * h).max() < 1e-12

    def test_dealias_removes_high_modes(self, grid32):
        g = grid32
        f = np.cos(15 * g.X)
        assert np.abs(dealias(g, f)).max() < 1e-13

    def test_velocity_band_divergence_free(self, grid64):
        u = random_band_velocity(grid64, 1, 8, seed=3)
        assert np.abs(divergence(grid64, u)).max() < 1e-12
