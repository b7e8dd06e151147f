"""Initial densities and velocity fields."""
from __future__ import annotations

import math

import numpy as np

from .spectral import TorusGrid


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity transition from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.asarray(t, dtype=float)

    def bump(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    left = bump(t)
    right = bump(1.0 - t)
    return left / (left + right)


def periodic_distance(grid: TorusGrid, center) -> np.ndarray:
    """Distance from every node to ``center`` on the torus (minimal image)."""
    L = grid.length
    dx = (grid.X - center[0] + 0.5 * L) % L - 0.5 * L
    dy = (grid.Y - center[1] + 0.5 * L) % L - 0.5 * L
    return np.hypot(dx, dy)


def density_patch(
    grid: TorusGrid,
    center=(math.pi, math.pi),
    radius: float = 1.0,
    inner: float = 3.0,
    outer: float = 1.0,
    width: float | None = None,
) -> np.ndarray:
    """Two-valued disc density with a smooth interface.

    The transition spans ``[radius - width, radius + width]`` and is exactly
    flat outside it, so the field takes the values ``inner`` and ``outer`` on
    open sets. ``width`` defaults to two grid cells.
    """
    if inner <= 0 or outer <= 0:
        raise ValueError("patch densities must be positive")
    if width is None:
        width = 2.0 * grid.h
    r = periodic_distance(grid, center)
    if width <= 0:
        frac = (r < radius).astype(float)
    else:
        frac = 1.0 - smooth_step((r - radius + width) / (2.0 * width))
    return outer + (inner - outer) * frac


def taylor_green(grid: TorusGrid, amplitude: float = 1.0) -> np.ndarray:
    """``(sin x cos y, -cos x sin y)`` scaled to the torus length."""
    X, Y = grid.X * grid.scale, grid.Y * grid.scale
    return amplitude * np.stack([np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y)])


def single_mode(grid: TorusGrid, k=(1, 0), amplitude: float = 1.0) -> np.ndarray:
    """Divergence-free plane wave ``amplitude * k_perp/|k| * sin(k.x)``."""
    kx, ky = (float(k[0]), float(k[1]))
    norm = math.hypot(kx, ky)
    if norm == 0:
        raise ValueError("wavevector must be nonzero")
    phase = grid.scale * (kx * grid.X + ky * grid.Y)
    direction = np.array([-ky, kx]) / norm
    return amplitude * direction[:, None, None] * np.sin(phase)[None]


def _band_modes(kmin: float, kmax: float):
    """Integer wavevectors in a half-plane with ``kmin <= |m| <= kmax``."""
    top = int(math.floor(kmax))
    modes = []
    for mx in range(-top, top + 1):
        for my in range(0, top + 1):
            if my == 0 and mx <= 0:
                continue
            r = math.hypot(mx, my)
            if kmin - 1e-12 <= r <= kmax + 1e-12:
                modes.append((mx, my))
    return modes


def random_band_scalar(
    grid: TorusGrid,
    kmin: float,
    kmax: float,
    seed: int,
    amplitude: float = 1.0,
    slope: float = 0.0,
) -> np.ndarray:
    """Random real mean-free field with lattice modes in ``[kmin, kmax]``.

    Wavenumbers are integer lattice indices (multiples of ``2*pi/L``). The
    coefficients depend only on ``seed`` and the band, not on ``grid.n``, so
    the same continuum function is sampled on every resolution. The result is
    scaled to unit L2 norm times ``amplitude``.
    """
    modes = _band_modes(kmin, kmax)
    if not modes:
        raise ValueError("empty wavenumber band")
    if kmax >= grid.n / 2:
        raise ValueError("band exceeds grid resolution")
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((len(modes), 2))
    n = grid.n
    full = np.zeros((n, n), dtype=complex)
    for (mx, my), (re, im) in zip(modes, coeffs):
        c = (re + 1j * im) * math.hypot(mx, my) ** (-slope)
        full[mx % n, my % n] += c
        full[(-mx) % n, (-my) % n] += np.conj(c)
    field = np.real(np.fft.ifft2(full)) * n * n
    norm = math.sqrt(float(np.sum(field**2)) * grid.quadrature_weight)
    return amplitude * field / norm


def random_band_velocity(
    grid: TorusGrid,
    kmin: float,
    kmax: float,
    seed: int,
    amplitude: float = 1.0,
    slope: float = 0.0,
) -> np.ndarray:
    """Random divergence-free field ``curl psi`` with ``psi`` band-limited.

    Normalized to L2 norm ``amplitude``.
    """
    psi = random_band_scalar(grid, kmin, kmax, seed, 1.0, slope)
    coeffs = grid.fft(psi)
    u = grid.ifft(np.stack([grid.iky * coeffs, -grid.ikx * coeffs]))
    norm = math.sqrt(float(np.sum(u**2)) * grid.quadrature_weight)
    return amplitude * u / norm


def dyadic_band_velocity(
    grid: TorusGrid, jmin: int, jmax: int, seed: int, amplitude: float = 1.0
) -> np.ndarray:
    """Random velocity with lattice wavenumbers in ``[2**jmin, 2**jmax]``."""
    return random_band_velocity(grid, 2.0**jmin, 2.0**jmax, seed, amplitude)
