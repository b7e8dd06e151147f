import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inhomns.errors import DegenerateInput, InvalidDensity, InvalidExponents, InvalidWeight
from inhomns.initial import density_patch, random_band_scalar, random_band_velocity, single_mode
from inhomns.norms import (
    atomic_decompose,
    besov_b021_norm,
    check_gn,
    check_gn_grad_inf,
    check_gn_inf,
    check_gn_weighted,
    check_ladyzhenskaya,
    l2_norm,
    lebesgue_norm,
    norm_report,
    sobolev_norm,
    weighted_tally,
)
from inhomns.spectral import TorusGrid, gradient, leray_project, lp_block, lp_range

PI = math.pi
SIN4 = 1.5 * PI**2  # integral of sin^4 over the 2pi-torus
seeds = st.integers(min_value=0, max_value=10_000)


class TestSobolev:
    def test_sin_x_h1(self, grid64):
        assert sobolev_norm(grid64, np.sin(grid64.X), 1) == pytest.approx(PI * math.sqrt(2), rel=1e-12)

    def test_sin_x_hm1(self, grid64):
        assert sobolev_norm(grid64, np.sin(grid64.X), -1) == pytest.approx(PI * math.sqrt(2), rel=1e-12)

    @pytest.mark.parametrize("s", [-2, -1, -0.5, 0, 0.5, 1, 2])
    def test_constant(self, grid32, s):
        assert sobolev_norm(grid32, np.full((32, 32), 4.0), s) == 0.0

    @given(seeds)
    def test_s0_and_s1(self, seed):
        g = TorusGrid(32)
        # band-limited: the Nyquist modes carry no first derivative
        f = random_band_scalar(g, 1, 15, seed) + 2.0
        mf = f - f.mean()
        assert sobolev_norm(g, f, 0) == pytest.approx(l2_norm(g, mf), rel=1e-10)
        assert sobolev_norm(g, f, 1) == pytest.approx(l2_norm(g, gradient(g, f)), rel=1e-10)


class TestLebesgue:
    def test_sin_l4(self, grid64):
        assert lebesgue_norm(grid64, np.sin(grid64.X), 4) == pytest.approx(SIN4**0.25, rel=1e-12)

    def test_one_l2(self, grid32):
        assert lebesgue_norm(grid32, np.ones((32, 32)), 2) == pytest.approx(2 * PI, rel=1e-14)

    def test_sin_linf(self, grid128):
        assert abs(lebesgue_norm(grid128, np.sin(grid128.X), math.inf) - 1.0) < 1e-3

    def test_vector_magnitude(self, grid32):
        g = grid32
        u = np.stack([np.ones((32, 32)), np.ones((32, 32))])
        assert lebesgue_norm(g, u, 3) == pytest.approx(math.sqrt(2) * (4 * PI**2) ** (1 / 3))

    def test_invalid_p(self, grid16):
        with pytest.raises(InvalidExponents):
            lebesgue_norm(grid16, np.ones((16, 16)), 0.5)


class TestInequalities:
    def test_ladyzhenskaya_sin(self, grid64):
        expected = math.sqrt(SIN4) / (2 * PI**2)
        assert check_ladyzhenskaya(grid64, np.sin(grid64.X)) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.195, abs=1e-3)

    def test_ladyzhenskaya_dilation(self, grid64):
        base = check_ladyzhenskaya(grid64, np.sin(grid64.X))
        # the same profile on the half-length torus has identical ratio
        half = TorusGrid(64, PI)
        assert check_ladyzhenskaya(half, np.sin(2 * half.X)) == pytest.approx(base, rel=1e-12)
        # on a fixed torus the gradient doubles while both Lebesgue norms stay put
        assert check_ladyzhenskaya(grid64, np.sin(2 * grid64.X)) == pytest.approx(base / 2, rel=1e-12)

    def test_gn4_consistent_with_ladyzhenskaya(self, grid64):
        z = np.sin(grid64.X)
        assert check_gn(grid64, z, 4) == pytest.approx(math.sqrt(check_ladyzhenskaya(grid64, z)), rel=1e-12)
        assert check_gn(grid64, z, 4) == pytest.approx(0.442, abs=1e-3)

    @pytest.mark.parametrize("p", [2.5, 4.0, 6.0])
    def test_gn_weighted_constant_weight(self, grid64, p):
        z = random_band_scalar(grid64, 1, 4, seed=5)
        factor = math.log(math.e + 2 * PI) ** ((p - 2) / p)
        got = check_gn_weighted(grid64, z, np.ones((64, 64)), p)
        assert got == pytest.approx(check_gn(grid64, z, p) / factor, rel=1e-12)

    def test_gn_weighted_shift(self, grid64):
        g = grid64
        a = density_patch(g, inner=3.0, outer=1.0)
        z = random_band_scalar(g, 1, 4, seed=2)
        ratio = check_gn_weighted(g, z + 10.0, a, 4)
        assert ratio == pytest.approx(check_gn_weighted(g, z, a, 4), rel=1e-12)

    def test_gn_inf_sin(self, grid64):
        assert check_gn_inf(grid64, np.sin(grid64.X)) == pytest.approx(SIN4**-0.25, rel=1e-12)

    def test_gn_grad_inf_sin(self, grid64):
        assert abs(check_gn_grad_inf(grid64, np.sin(grid64.X)) - SIN4**-0.25) < 1e-6

    @pytest.mark.parametrize(
        "check",
        [check_ladyzhenskaya, check_gn_inf, check_gn_grad_inf, lambda g, z: check_gn(g, z, 4)],
    )
    def test_degenerate(self, grid16, check):
        with pytest.raises(DegenerateInput):
            check(grid16, np.full((16, 16), 2.0))

    def test_invalid_weight(self, grid16):
        z = np.sin(grid16.X)
        with pytest.raises(InvalidWeight):
            check_gn_weighted(grid16, z, np.zeros((16, 16)), 4)
        with pytest.raises(InvalidWeight):
            check_gn_weighted(grid16, z, -np.ones((16, 16)), 4)

    def test_gn_exponent_range(self, grid16):
        with pytest.raises(InvalidExponents):
            check_gn(grid16, np.sin(grid16.X), 1.5)

    @given(seeds)
    def test_ratios_finite_and_bounded(self, seed):
        g = TorusGrid(32)
        z = random_band_scalar(g, 1, 6, seed)
        values = [
            check_ladyzhenskaya(g, z),
            check_gn(g, z, 6),
            check_gn_inf(g, z),
            check_gn_grad_inf(g, z),
        ]
        assert all(math.isfinite(v) and 0 < v < 10 for v in values)


class TestBesov:
    def test_unit_mode(self, grid32):
        z = np.sin(grid32.X)
        assert besov_b021_norm(grid32, z) == pytest.approx(l2_norm(grid32, z), rel=1e-12)

    def test_constant(self, grid32):
        assert besov_b021_norm(grid32, np.full((32, 32), 1.5)) == 0.0

    def test_white_noise_exceeds_l2(self, grid64):
        g = grid64
        z = random_band_scalar(g, 1, 30, seed=4, slope=1.0)
        ratio = besov_b021_norm(g, z) / sobolev_norm(g, z, 0)
        jmin, jmax = lp_range(g)
        active = sum(1 for j in range(jmin, jmax + 1) if l2_norm(g, lp_block(g, z, j)) > 1e-3 * l2_norm(g, z))
        assert 1.0 < ratio <= 2 * math.sqrt(active)

    @given(seeds)
    def test_dominates_l2(self, seed):
        g = TorusGrid(32)
        z = np.random.default_rng(seed).standard_normal((32, 32))
        assert besov_b021_norm(g, z) >= sobolev_norm(g, z, 0) * (1 - 1e-12)


class TestAtoms:
    def test_single_block(self, grid64):
        g = grid64
        u = single_mode(g, (4, 0), 1.3)
        dec = atomic_decompose(g, u, np.ones((64, 64)))
        assert [j for j, _ in dec.atoms] == [2]
        assert dec.weight_tally == pytest.approx(2 * l2_norm(g, u), rel=1e-12)

    def test_zero(self, grid32):
        dec = atomic_decompose(grid32, np.zeros((2, 32, 32)), np.ones((32, 32)))
        assert dec.atoms == [] and dec.weight_tally == 0.0

    def test_invalid_density(self, grid16):
        with pytest.raises(InvalidDensity):
            atomic_decompose(grid16, np.zeros((2, 16, 16)), np.zeros((16, 16)))

    def test_invalid_s(self, grid16):
        with pytest.raises(InvalidExponents):
            atomic_decompose(grid16, np.zeros((2, 16, 16)), np.ones((16, 16)), s=1.0)

    def test_patch_density_tally(self, grid128):
        g = grid128
        u = random_band_velocity(g, 1, 8, seed=9)
        flat = atomic_decompose(g, u, np.ones((128, 128))).weight_tally
        patch = atomic_decompose(g, u, density_patch(g, inner=3.0, outer=1.0)).weight_tally
        assert math.isfinite(patch) and patch / flat <= 4.0

    @given(seeds)
    def test_reconstruction_and_divergence(self, seed):
        g = TorusGrid(32)
        u = np.random.default_rng(seed).standard_normal((2, 32, 32))
        u = leray_project(g, u)
        dec = atomic_decompose(g, u, 1.0 + np.random.default_rng(seed + 1).random((32, 32)))
        assert l2_norm(g, dec.reconstruct(g) - u) <= 1e-8 * l2_norm(g, u)
        for _, atom in dec.atoms:
            div = gradient(g, atom[0])[0] + gradient(g, atom[1])[1]
            assert np.abs(div).max() < 1e-10 * max(np.abs(atom).max(), 1.0) * g.n

    @given(seeds, st.floats(min_value=0.2, max_value=5.0))
    def test_constant_density_matches_block_norms(self, seed, c):
        g = TorusGrid(32)
        u = random_band_velocity(g, 1, 12, seed)
        dec = atomic_decompose(g, u, np.full((32, 32), c))
        jmin, jmax = lp_range(g)
        direct = 0.0
        for j in range(jmin, jmax + 1):
            block = lp_block(g, u, j)
            direct += 2 ** (-j / 2) * sobolev_norm(g, block, 0.5) + 2 ** (j / 2) * c * sobolev_norm(g, block, -0.5)
        assert dec.weight_tally == pytest.approx(direct, rel=1e-8)

    @given(seeds)
    def test_l2_embedding(self, seed):
        g = TorusGrid(32)
        rho = density_patch(g, inner=3.0, outer=1.0, width=0.4)
        u = random_band_velocity(g, 1, 12, seed, slope=float(seed % 3))
        dec = atomic_decompose(g, u, rho)
        assert l2_norm(g, u) <= dec.weight_tally / (2 * math.sqrt(rho.min())) * (1 + 1e-12)

    def test_weighted_tally_reproduces(self, grid32):
        g = grid32
        u = random_band_velocity(g, 1, 8, seed=1)
        rho = density_patch(g, width=0.4)
        dec = atomic_decompose(g, u, rho)
        assert weighted_tally(g, dec.atoms, rho) == pytest.approx(dec.weight_tally, rel=1e-13)


def test_norm_report_json(grid32):
    g = grid32
    u = random_band_velocity(g, 1, 4, seed=0)
    rep = norm_report(g, u).to_json()
    assert {"l2", "hs:0.5", "hs:-1", "lp:4", "linf", "b021", "btilde_upper"} <= set(rep)
    assert all(v >= 0 for v in rep.values())
    assert rep["hs:0"] == pytest.approx(rep["l2"], rel=1e-10)
    json.dumps(rep)
