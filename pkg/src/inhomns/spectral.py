"""Discrete calculus on the doubly periodic square.

Fields are sampled on an ``n x n`` grid with ``values[i, j] = f(x_i, y_j)``
(``indexing='ij'``). Scalar fields have shape ``(n, n)``, vector fields
``(2, n, n)`` and matrix fields ``(2, 2, n, n)``; every operator acts on the
trailing two axes, so stacks of fields are handled transparently.

Spectral coefficients use the real-to-complex layout of :func:`numpy.fft.rfft2`
(shape ``(..., n, n // 2 + 1)``). First-derivative symbols vanish on the
Nyquist row and column so that odd derivatives of real fields stay real and
the discrete divergence, gradient and Leray projector are mutually consistent.

Functions accept either plain arrays or :class:`ScalarField` /
:class:`VectorField` instances; field inputs produce field outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import BandOutOfRange

_WORKERS = 1


def set_workers(count: int) -> None:
    """Number of threads used by each FFT call."""
    global _WORKERS
    _WORKERS = max(1, int(count))

__all__ = [
    "TorusGrid",
    "ScalarField",
    "VectorField",
    "derivative",
    "gradient",
    "divergence",
    "laplacian",
    "jacobian",
    "hessian",
    "leray_project",
    "gradient_project",
    "lp_block",
    "lp_range",
    "lp_symbol",
    "inverse_laplacian",
    "dealias",
    "product",
    "advect",
    "mean",
    "mean_free",
    "set_workers",
]


class TorusGrid:
    """Uniform grid on the square torus of side ``length``.

    Parameters
    ----------
    n : int
        Points per dimension; even and at least 8.
    length : float, optional
        Side length of the torus. Defaults to ``2*pi``.

    Attributes
    ----------
    h : float
        Grid spacing ``length / n``.
    quadrature_weight : float
        Area element ``h**2`` attached to every node.
    kx, ky : ndarray
        Wavenumbers broadcastable to the half-spectrum shape.
    k2 : ndarray
        ``|k|^2`` on the half spectrum.
    """

    def __init__(self, n: int, length: float = 2.0 * np.pi):
        n = int(n)
        if n < 8 or n % 2:
            raise ValueError(f"grid size must be even and >= 8, got {n}")
        if not length > 0:
            raise ValueError(f"torus length must be positive, got {length}")
        self.n = n
        self.length = float(length)
        self.h = self.length / n
        self.quadrature_weight = self.h**2
        self.scale = 2.0 * np.pi / self.length

        self.mode_x = np.fft.fftfreq(n, 1.0 / n)
        self.mode_y = np.arange(n // 2 + 1, dtype=float)
        self.kx = (self.scale * self.mode_x)[:, None]
        self.ky = (self.scale * self.mode_y)[None, :]
        self.k2 = self.kx**2 + self.ky**2
        self.kmag = np.sqrt(self.k2)
        self.inv_k2 = np.divide(1.0, self.k2, out=np.zeros_like(self.k2), where=self.k2 > 0)

        kx_d = self.kx.copy()
        kx_d[n // 2, 0] = 0.0
        ky_d = self.ky.copy()
        ky_d[0, -1] = 0.0
        self.kx_d = kx_d
        self.ky_d = ky_d
        self.ikx = 1j * kx_d
        self.iky = 1j * ky_d
        self.kd2 = kx_d**2 + ky_d**2
        self.inv_kd2 = np.divide(1.0, self.kd2, out=np.zeros_like(self.kd2), where=self.kd2 > 0)

        # rfft2 stores half the spectrum: interior columns stand for two modes.
        mult = np.full(n // 2 + 1, 2.0)
        mult[0] = 1.0
        mult[-1] = 1.0
        self.multiplicity = np.broadcast_to(mult[None, :], (n, n // 2 + 1))

        cutoff = math.ceil(n / 3) - 1
        self.dealias_mask = (np.abs(self.mode_x)[:, None] <= cutoff) & (
            self.mode_y[None, :] <= cutoff
        )

        self.x = np.arange(n) * self.h
        self.X, self.Y = np.meshgrid(self.x, self.x, indexing="ij")

    # -- identity -----------------------------------------------------------
    def __eq__(self, other):
        return (
            isinstance(other, TorusGrid)
            and other.n == self.n
            and other.length == self.length
        )

    def __hash__(self):
        return hash((self.n, self.length))

    def __repr__(self):
        return f"TorusGrid(n={self.n}, length={self.length!r})"

    @property
    def area(self) -> float:
        return self.length**2

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @property
    def kmin(self) -> float:
        """Smallest nonzero wavenumber magnitude."""
        return self.scale

    @property
    def kmax(self) -> float:
        """Largest wavenumber magnitude on the grid (the spectral corner)."""
        return self.scale * math.sqrt(2.0) * (self.n // 2)

    # -- transforms ---------------------------------------------------------
    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfft2(values, axes=(-2, -1), workers=_WORKERS)

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfft2(coeffs, s=(self.n, self.n), axes=(-2, -1), workers=_WORKERS)

    def apply(self, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        """Apply a Fourier multiplier given on the half spectrum."""
        return self.ifft(symbol * self.fft(values))

    # -- quadrature ---------------------------------------------------------
    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.sum(values, axis=(-2, -1)) * self.quadrature_weight

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """L2 inner product summed over all leading components."""
        return float(np.sum(a * b) * self.quadrature_weight)

    def spectral_inner(self, a_hat: np.ndarray, b_hat: np.ndarray) -> float:
        """L2 inner product computed from half-spectrum coefficients."""
        prod = np.real(np.conj(a_hat) * b_hat) * self.multiplicity
        return float(np.sum(prod) * self.length**2 / self.n**4)

    def spectral_norm2(self, coeffs: np.ndarray, weight: np.ndarray | None = None) -> float:
        """Squared L2 norm from coefficients, optionally weighted per mode."""
        power = np.abs(coeffs) ** 2 * self.multiplicity
        if weight is not None:
            power = power * weight
        return float(np.sum(power) * self.length**2 / self.n**4)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        return self.X, self.Y


# ---------------------------------------------------------------------------
# field wrappers


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a scalar function with lazily cached spectrum."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"scalar field must have shape {(self.grid.n,) * 2}, got {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @cached_property
    def spectral(self) -> np.ndarray:
        coeffs = self.grid.fft(self.values)
        coeffs.setflags(write=False)
        return coeffs

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Two scalar components on a common grid."""

    x: ScalarField
    y: ScalarField

    def __post_init__(self):
        if self.x.grid != self.y.grid:
            raise ValueError("vector components live on different grids")

    @classmethod
    def from_array(cls, grid: TorusGrid, values: np.ndarray) -> "VectorField":
        values = np.asarray(values, dtype=float)
        return cls(ScalarField(grid, values[0]), ScalarField(grid, values[1]))

    @property
    def grid(self) -> TorusGrid:
        return self.x.grid

    @property
    def values(self) -> np.ndarray:
        return np.stack([self.x.values, self.y.values])

    @property
    def spectral(self) -> np.ndarray:
        return np.stack([self.x.spectral, self.y.spectral])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _unwrap(f):
    """Return ``(values, rewrap)`` where ``rewrap`` restores the input type."""
    if isinstance(f, ScalarField):
        return f.values, lambda v: _wrap(f.grid, v)
    if isinstance(f, VectorField):
        return f.values, lambda v: _wrap(f.grid, v)
    return np.asarray(f, dtype=float), lambda v: v


def _wrap(grid, values):
    if values.ndim == 2:
        return ScalarField(grid, values)
    if values.ndim == 3 and values.shape[0] == 2:
        return VectorField.from_array(grid, values)
    return values


# ---------------------------------------------------------------------------
# differential operators


def derivative(grid: TorusGrid, f, axis: int, order: int = 1):
    """Spectral derivative along ``axis`` (1 for x, 2 for y) of order 1 or 2."""
    vals, rewrap = _unwrap(f)
    if axis not in (1, 2) or order not in (1, 2):
        raise ValueError("axis must be 1 or 2 and order must be 1 or 2")
    if order == 1:
        symbol = grid.ikx if axis == 1 else grid.iky
    else:
        symbol = -(grid.kx**2) if axis == 1 else -(grid.ky**2)
    return rewrap(grid.apply(vals, symbol))


def gradient(grid: TorusGrid, f) -> np.ndarray:
    """Gradient; a trailing component axis is inserted before the grid axes."""
    vals, _ = _unwrap(f)
    coeffs = grid.fft(vals)
    return grid.ifft(np.stack([grid.ikx * coeffs, grid.iky * coeffs], axis=-3))


def divergence(grid: TorusGrid, u) -> np.ndarray:
    vals, _ = _unwrap(u)
    coeffs = grid.fft(vals)
    return grid.ifft(grid.ikx * coeffs[..., 0, :, :] + grid.iky * coeffs[..., 1, :, :])


def laplacian(grid: TorusGrid, f):
    vals, rewrap = _unwrap(f)
    return rewrap(grid.apply(vals, -grid.k2))


def jacobian(grid: TorusGrid, u) -> np.ndarray:
    """Velocity gradient with ``J[i, j] = d u_i / d x_j``."""
    vals, _ = _unwrap(u)
    return gradient(grid, vals)


def hessian(grid: TorusGrid, f) -> np.ndarray:
    """Second derivatives ``H[..., a, b] = d_a d_b f`` (same symbols as repeated first derivatives on the diagonal)."""
    vals, _ = _unwrap(f)
    coeffs = grid.fft(vals)
    xx = -(grid.kx**2) * coeffs
    yy = -(grid.ky**2) * coeffs
    xy = grid.ikx * grid.iky * coeffs
    out = np.stack([np.stack([xx, xy], axis=-3), np.stack([xy, yy], axis=-3)], axis=-4)
    return grid.ifft(out)


# ---------------------------------------------------------------------------
# projections


def leray_hat(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Leray projector on half-spectrum coefficients of a vector field."""
    kdotw = (grid.kx_d * coeffs[..., 0, :, :] + grid.ky_d * coeffs[..., 1, :, :]) * grid.inv_kd2
    return np.stack(
        [coeffs[..., 0, :, :] - grid.kx_d * kdotw, coeffs[..., 1, :, :] - grid.ky_d * kdotw],
        axis=-3,
    )


def gradient_hat(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Complementary (gradient) projector ``I - P`` on coefficients."""
    kdotw = (grid.kx_d * coeffs[..., 0, :, :] + grid.ky_d * coeffs[..., 1, :, :]) * grid.inv_kd2
    return np.stack([grid.kx_d * kdotw, grid.ky_d * kdotw], axis=-3)


def leray_project(grid: TorusGrid, w):
    """Project onto discretely divergence-free fields, keeping the mean."""
    vals, rewrap = _unwrap(w)
    return rewrap(grid.ifft(leray_hat(grid, grid.fft(vals))))


def gradient_project(grid: TorusGrid, w):
    """Gradient part ``w - leray_project(w)``; zero mean."""
    vals, rewrap = _unwrap(w)
    return rewrap(grid.ifft(gradient_hat(grid, grid.fft(vals))))


def inverse_laplacian(grid: TorusGrid, f):
    """Solve ``Laplacian(q) = f - mean(f)`` for mean-free ``q``."""
    vals, rewrap = _unwrap(f)
    return rewrap(grid.apply(vals, -grid.inv_k2))


# ---------------------------------------------------------------------------
# Littlewood-Paley blocks


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t**4 * (35.0 - 84.0 * t + 70.0 * t**2 - 20.0 * t**3)


def _low_pass(r: np.ndarray) -> np.ndarray:
    """Radial cutoff equal to 1 on [0, 1] and 0 on [2, inf)."""
    return 1.0 - _smoothstep(r - 1.0)


def lp_range(grid: TorusGrid) -> tuple[int, int]:
    """Inclusive range of dyadic indices whose blocks meet the grid spectrum."""
    jmin = math.floor(math.log2(grid.kmin) + 1e-12)
    jmax = math.ceil(math.log2(grid.kmax) - 1e-12)
    return jmin, jmax


def lp_symbol(grid: TorusGrid, j: int) -> np.ndarray:
    """Multiplier of block ``j``; supported on ``2**(j-1) < |k| < 2**(j+1)``."""
    jmin, jmax = lp_range(grid)
    if not jmin <= j <= jmax:
        raise BandOutOfRange(f"band j={j} outside resolvable range [{jmin}, {jmax}]")
    r = grid.kmag * 2.0 ** (-j)
    symbol = _low_pass(r) - _low_pass(2.0 * r)
    symbol[0, 0] = 0.0
    return symbol


def lp_block(grid: TorusGrid, f, j: int):
    """Frequency-localized piece of ``f`` at dyadic scale ``2**j``."""
    vals, rewrap = _unwrap(f)
    return rewrap(grid.apply(vals, lp_symbol(grid, j)))


# ---------------------------------------------------------------------------
# products


def dealias(grid: TorusGrid, f):
    """Zero the top third of modes in each direction."""
    vals, rewrap = _unwrap(f)
    return rewrap(grid.apply(vals, grid.dealias_mask))


def product(grid: TorusGrid, f, g):
    """Dealiased pointwise product (broadcasting over leading axes)."""
    fv, rewrap = _unwrap(f)
    gv, _ = _unwrap(g)
    return rewrap(dealias(grid, fv * gv))


def advect(grid: TorusGrid, v: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Dealiased ``(v . grad) u`` for scalar or vector ``u``."""
    grad = gradient(grid, u)
    return dealias(grid, v[0] * grad[..., 0, :, :] + v[1] * grad[..., 1, :, :])


def mean(f) -> np.ndarray:
    vals, _ = _unwrap(f)
    return np.mean(vals, axis=(-2, -1))


def mean_free(f):
    vals, rewrap = _unwrap(f)
    return rewrap(vals - np.mean(vals, axis=(-2, -1), keepdims=True))
