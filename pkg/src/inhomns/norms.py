"""Norms, functional-inequality ratios and the atomic decomposition.

Vector and matrix fields are measured with the pointwise Euclidean
(Frobenius) magnitude, so ``lebesgue_norm`` of a field of shape
``(2, n, n)`` integrates ``(u_1^2 + u_2^2)^{p/2}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, InvalidDensity, InvalidExponents, InvalidWeight
from .spectral import TorusGrid, _unwrap, gradient, hessian, leray_hat, lp_range, lp_symbol

_TINY = 1e-300


def _values(f) -> np.ndarray:
    return _unwrap(f)[0]


def magnitude(f) -> np.ndarray:
    """Pointwise Euclidean magnitude over all leading component axes."""
    vals = _values(f)
    if vals.ndim == 2:
        return np.abs(vals)
    return np.sqrt(np.sum(vals**2, axis=tuple(range(vals.ndim - 2))))


def l2_norm(grid: TorusGrid, f) -> float:
    vals = _values(f)
    return math.sqrt(float(np.sum(vals**2)) * grid.quadrature_weight)


def lebesgue_norm(grid: TorusGrid, f, p: float) -> float:
    """L^p norm by equal-weight quadrature; ``p = inf`` is the grid maximum."""
    if p < 1:
        raise InvalidExponents(f"p must be >= 1, got {p}")
    mag = magnitude(f)
    if math.isinf(p):
        return float(mag.max())
    if p == 2:
        return l2_norm(grid, f)
    return float(np.sum(mag**p) * grid.quadrature_weight) ** (1.0 / p)


def sobolev_norm(grid: TorusGrid, f, s: float) -> float:
    """Homogeneous Sobolev norm of the mean-free part, ``(sum |k|^{2s} |f_k|^2)^{1/2}``."""
    vals = _values(f)
    coeffs = grid.fft(vals)
    weight = np.zeros_like(grid.k2)
    nz = grid.k2 > 0
    weight[nz] = grid.k2[nz] ** s
    return math.sqrt(grid.spectral_norm2(coeffs, weight))


def sobolev_norm_hat(grid: TorusGrid, coeffs: np.ndarray, s: float) -> float:
    """``sobolev_norm`` from precomputed half-spectrum coefficients."""
    weight = np.zeros_like(grid.k2)
    nz = grid.k2 > 0
    weight[nz] = grid.k2[nz] ** s
    return math.sqrt(grid.spectral_norm2(coeffs, weight))


def _mean_free(vals):
    return vals - np.mean(vals, axis=(-2, -1), keepdims=True)


def _nonzero(grid, vals, what="z"):
    if l2_norm(grid, vals) <= 1e-14 * grid.length * max(1.0, float(np.abs(vals).max(initial=0.0))):
        raise DegenerateInput(f"{what} is identically zero")


# ---------------------------------------------------------------------------
# inequality ratios


def check_ladyzhenskaya(grid: TorusGrid, z) -> float:
    """``||z||_4^2 / (||z||_2 ||grad z||_2)`` for the mean-free part of ``z``."""
    z = _mean_free(_values(z))
    _nonzero(grid, z)
    grad = gradient(grid, z)
    return lebesgue_norm(grid, z, 4) ** 2 / (l2_norm(grid, z) * l2_norm(grid, grad))


def check_gn(grid: TorusGrid, z, p: float) -> float:
    """``||z||_p / (||z||_2^{2/p} ||grad z||_2^{1-2/p})`` for mean-free ``z``, ``2 <= p < inf``."""
    if not 2 <= p < math.inf:
        raise InvalidExponents(f"p must satisfy 2 <= p < inf, got {p}")
    z = _mean_free(_values(z))
    _nonzero(grid, z)
    grad = gradient(grid, z)
    theta = 2.0 / p
    return lebesgue_norm(grid, z, p) / (
        l2_norm(grid, z) ** theta * l2_norm(grid, grad) ** (1.0 - theta)
    )


def check_gn_weighted(grid: TorusGrid, z, a, p: float) -> float:
    """Weighted variant: ``z`` is shifted so that ``int a z = 0`` and the
    right-hand side carries the factor ``log^{(p-2)/p}(e + ||a||_2)``.

    ``a`` is rescaled to mean one before use.
    """
    if not 2 <= p < math.inf:
        raise InvalidExponents(f"p must satisfy 2 <= p < inf, got {p}")
    a = np.asarray(_values(a), dtype=float)
    if np.any(a < 0):
        raise InvalidWeight("weight must be nonnegative")
    abar = float(np.mean(a))
    if abar <= 0:
        raise InvalidWeight("weight must have positive mean")
    a = a / abar
    z = np.array(_values(z), dtype=float)
    # weighted mean of each component (a has mean one)
    shift = np.mean(a * z, axis=(-2, -1), keepdims=True)
    z = z - shift
    _nonzero(grid, z)
    grad = gradient(grid, z)
    theta = 2.0 / p
    log_factor = math.log(math.e + l2_norm(grid, a)) ** ((p - 2.0) / p)
    rhs = log_factor * l2_norm(grid, z) ** theta * l2_norm(grid, grad) ** (1.0 - theta)
    return lebesgue_norm(grid, z, p) / rhs


def check_gn_inf(grid: TorusGrid, z) -> float:
    """``||z||_inf / (||z||_4^{1/2} ||grad z||_4^{1/2})`` for mean-free ``z``."""
    z = _mean_free(_values(z))
    _nonzero(grid, z)
    grad = gradient(grid, z)
    return lebesgue_norm(grid, z, math.inf) / math.sqrt(
        lebesgue_norm(grid, z, 4) * lebesgue_norm(grid, grad, 4)
    )


def check_gn_grad_inf(grid: TorusGrid, z) -> float:
    """``||grad z||_inf / (||z||_4^{1/4} ||grad^2 z||_4^{3/4})`` for mean-free ``z``."""
    z = _mean_free(_values(z))
    _nonzero(grid, z)
    grad = gradient(grid, z)
    hess = hessian(grid, z)
    return lebesgue_norm(grid, grad, math.inf) / (
        lebesgue_norm(grid, z, 4) ** 0.25 * lebesgue_norm(grid, hess, 4) ** 0.75
    )


# ---------------------------------------------------------------------------
# Besov-type quantities


def besov_b021_norm(grid: TorusGrid, z) -> float:
    """Sum over resolvable dyadic blocks of the block L2 norms."""
    coeffs = grid.fft(_values(z))
    jmin, jmax = lp_range(grid)
    total = 0.0
    for j in range(jmin, jmax + 1):
        total += math.sqrt(grid.spectral_norm2(coeffs * lp_symbol(grid, j)))
    return total


@dataclass
class AtomDecomposition:
    """Dyadic atoms of a divergence-free field with their interpolation tally.

    Attributes
    ----------
    atoms : list of (int, ndarray)
        Scale index and divergence-free atom of shape ``(2, n, n)``.
    s : float
        Interpolation exponent.
    weight_tally : float
        ``sum_j 2^{-j/2} ||u_j||_{H^s} + 2^{j/2} ||P(a u_j)||_{H^{-s}}``.
    mean : ndarray, shape (2,)
        Spatial mean of the decomposed field, carried outside the atoms.
    atom_norms : list of dict
        Per-atom entries ``hs``, ``hms`` and ``weighted_mean`` (the logged mean
        of ``P(a u_j)`` that the negative norm discards).
    """

    atoms: list = field(default_factory=list)
    s: float = 0.5
    weight_tally: float = 0.0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    atom_norms: list = field(default_factory=list)

    def reconstruct(self, grid: TorusGrid) -> np.ndarray:
        total = np.zeros((2, grid.n, grid.n))
        for _, atom in self.atoms:
            total += atom
        return total + self.mean[:, None, None]


def atom_tally_terms(grid: TorusGrid, atom: np.ndarray, j: int, weight, s: float) -> dict:
    """Per-atom contributions to the interpolation tally."""
    hs = sobolev_norm(grid, atom, s)
    weighted = np.asarray(weight) * atom
    proj_hat = leray_hat(grid, grid.fft(weighted))
    hms = sobolev_norm_hat(grid, proj_hat, -s)
    mean = np.real(proj_hat[:, 0, 0]) / grid.n**2
    return {
        "j": int(j),
        "hs": hs,
        "hms": hms,
        "term": 2.0 ** (-j / 2.0) * hs + 2.0 ** (j / 2.0) * hms,
        "weighted_mean": float(np.linalg.norm(mean)),
    }


def atomic_decompose(grid: TorusGrid, u0, rho0, s: float = 0.5) -> AtomDecomposition:
    """Split ``u0`` into projected Littlewood-Paley blocks and tally them.

    The tally is an upper bound for the density-weighted interpolation norm
    since it evaluates one admissible decomposition.
    """
    if not 0 < s < 1:
        raise InvalidExponents(f"s must lie in (0, 1), got {s}")
    u0 = np.asarray(_values(u0), dtype=float)
    rho0 = np.broadcast_to(np.asarray(_values(rho0), dtype=float), (grid.n, grid.n))
    if rho0.min() <= 0:
        raise InvalidDensity("density must be positive")
    coeffs = grid.fft(u0)
    mean = np.real(coeffs[:, 0, 0]) / grid.n**2
    decomposition = AtomDecomposition(s=s, mean=mean)
    scale = max(l2_norm(grid, u0), _TINY)
    jmin, jmax = lp_range(grid)
    for j in range(jmin, jmax + 1):
        atom_hat = leray_hat(grid, coeffs * lp_symbol(grid, j))
        if math.sqrt(grid.spectral_norm2(atom_hat)) <= 1e-12 * scale:
            continue
        atom = grid.ifft(atom_hat)
        terms = atom_tally_terms(grid, atom, j, rho0, s)
        decomposition.atoms.append((j, atom))
        decomposition.atom_norms.append(terms)
        decomposition.weight_tally += terms["term"]
    return decomposition


def weighted_tally(grid: TorusGrid, atoms, weight, s: float = 0.5) -> float:
    """Tally of an arbitrary family ``[(j, field), ...]`` against ``weight``."""
    return sum(atom_tally_terms(grid, a, j, weight, s)["term"] for j, a in atoms)


# ---------------------------------------------------------------------------
# report


@dataclass
class NormReport:
    """Collection of norms of one field."""

    l2: float
    h_s: dict
    lp: dict
    linf: float
    besov_b021: float
    weighted_besov_upper: float

    def to_json(self) -> dict:
        out = {"l2": self.l2}
        for s, v in self.h_s.items():
            out[f"hs:{_fmt(s)}"] = v
        for p, v in self.lp.items():
            out[f"lp:{_fmt(p)}"] = v
        out["linf"] = self.linf
        out["b021"] = self.besov_b021
        out["btilde_upper"] = self.weighted_besov_upper
        return out


def _fmt(x: float) -> str:
    return repr(float(x)).rstrip("0").rstrip(".") if float(x) != int(x) else str(int(x))


def norm_report(
    grid: TorusGrid,
    f,
    s_values=(-1.0, -0.5, 0.0, 0.5, 1.0, 2.0),
    p_values=(2.0, 4.0),
    weight=None,
    s_interp: float = 0.5,
) -> NormReport:
    """Evaluate the standard set of norms of ``f``.

    ``weighted_besov_upper`` is the atomic tally against ``weight`` (default
    one) and is only computed for vector fields.
    """
    vals = _values(f)
    if vals.ndim == 3 and vals.shape[0] == 2:
        rho = np.ones((grid.n, grid.n)) if weight is None else weight
        btilde = atomic_decompose(grid, vals, rho, s_interp).weight_tally
    else:
        btilde = float("nan")
    return NormReport(
        l2=l2_norm(grid, vals),
        h_s={float(s): sobolev_norm(grid, vals, s) for s in s_values},
        lp={float(p): lebesgue_norm(grid, vals, p) for p in p_values},
        linf=lebesgue_norm(grid, vals, math.inf),
        besov_b021=besov_b021_norm(grid, vals),
        weighted_besov_upper=btilde,
    )
