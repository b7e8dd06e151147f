"""Steady Stokes solver and the pressure / Bogovskii-type projections."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MeanConstraintViolated
from .norms import l2_norm, lebesgue_norm, sobolev_norm
from .spectral import TorusGrid, _unwrap, divergence, gradient, gradient_hat, hessian, laplacian


@dataclass
class StokesSolution:
    """Solution of ``-Laplacian(w) + grad(q) = f``, ``div w = g``.

    Attributes
    ----------
    w : ndarray, shape (2, n, n)
        Mean-free velocity.
    grad_q : ndarray, shape (2, n, n)
    q : ndarray, shape (n, n)
        Mean-free pressure.
    dropped_mean : ndarray, shape (2,)
        Mean of ``f``, which no periodic solution can balance.
    """

    w: np.ndarray
    grad_q: np.ndarray
    q: np.ndarray
    dropped_mean: np.ndarray

    def residuals(self, grid: TorusGrid, f, g) -> tuple[float, float]:
        """Relative residuals of the momentum and divergence equations."""
        f = _unwrap(f)[0] - self.dropped_mean[:, None, None]
        g = _unwrap(g)[0]
        mom = -laplacian(grid, self.w) + self.grad_q - f
        div = divergence(grid, self.w) - g
        scale_f = max(l2_norm(grid, f), 1e-300)
        scale_g = max(l2_norm(grid, g), l2_norm(grid, gradient(grid, self.w)), 1e-300)
        return l2_norm(grid, mom) / scale_f, l2_norm(grid, div) / scale_g


def _check_mean_free(grid: TorusGrid, g: np.ndarray, what: str):
    m = np.mean(g, axis=(-2, -1))
    rms = math.sqrt(float(np.mean(g**2))) if g.size else 0.0
    if np.any(np.abs(m) > 1e-12 * max(rms, 1e-300)):
        raise MeanConstraintViolated(f"{what} must have zero mean (mean = {m})")


def solve_stokes(grid: TorusGrid, f, g=None) -> StokesSolution:
    """Solve the periodic Stokes system with zero-mean velocity and pressure."""
    f = np.asarray(_unwrap(f)[0], dtype=float)
    g = np.zeros((grid.n, grid.n)) if g is None else np.asarray(_unwrap(g)[0], dtype=float)
    _check_mean_free(grid, g, "divergence datum")
    f_hat = grid.fft(f)
    g_hat = grid.fft(g)
    dropped = np.real(f_hat[:, 0, 0]) / grid.n**2
    div_f = grid.ikx * f_hat[0] + grid.iky * f_hat[1]
    q_hat = -(div_f - grid.k2 * g_hat) * grid.inv_kd2
    grad_q_hat = np.stack([grid.ikx * q_hat, grid.iky * q_hat])
    w_hat = (f_hat - grad_q_hat) * grid.inv_k2
    return StokesSolution(
        w=grid.ifft(w_hat),
        grad_q=grid.ifft(grad_q_hat),
        q=grid.ifft(q_hat),
        dropped_mean=dropped,
    )


def stokes_estimate_ratio(grid: TorusGrid, solution: StokesSolution, f, g, p: float) -> float:
    """``||(grad^2 w, grad q)||_p / (||f||_p + ||grad g||_p)``."""
    f = np.asarray(_unwrap(f)[0], dtype=float)
    g = np.asarray(_unwrap(g)[0], dtype=float)
    hw = hessian(grid, solution.w)
    lhs_mag2 = np.sum(hw**2, axis=(0, 1, 2)) + np.sum(solution.grad_q**2, axis=0)
    lhs = lebesgue_norm(grid, np.sqrt(lhs_mag2), p)
    rhs = lebesgue_norm(grid, f, p) + lebesgue_norm(grid, gradient(grid, g), p)
    return lhs / rhs if rhs > 0 else 0.0


def pressure_operator(grid: TorusGrid, f) -> np.ndarray:
    """Gradient part ``-(-Laplacian)^{-1} grad div f`` of a vector field."""
    vals, rewrap = _unwrap(f)
    return rewrap(grid.ifft(gradient_hat(grid, grid.fft(vals))))


def bogovskii(grid: TorusGrid, k, check_mean: bool = True):
    """Right inverse of the divergence: returns a field with the divergence of ``k``.

    On the torus this is the gradient projector, so ``k = leray(k) + bogovskii(k)``.
    """
    vals, rewrap = _unwrap(k)
    if check_mean:
        _check_mean_free(grid, vals, "bogovskii input")
    return rewrap(grid.ifft(gradient_hat(grid, grid.fft(vals))))


def bogovskii_ratios(grid: TorusGrid, k, p: float = 2.0, q: float = 2.0) -> dict:
    """Measured operator ratios ``||Bk||_p/||k||_p`` and ``||grad Bk||_q/||div k||_q``."""
    vals = np.asarray(_unwrap(k)[0], dtype=float)
    bk = bogovskii(grid, vals)
    kp = lebesgue_norm(grid, vals, p)
    divk = lebesgue_norm(grid, divergence(grid, vals), q)
    return {
        "lp_ratio": lebesgue_norm(grid, bk, p) / kp if kp > 0 else 0.0,
        "gradient_ratio": lebesgue_norm(grid, gradient(grid, bk), q) / divk if divk > 0 else 0.0,
    }


def wminus1p_norm(grid: TorusGrid, f, p: float) -> float:
    """``||grad (-Laplacian)^{-1} f||_p`` of the mean-free part of ``f``."""
    vals = np.asarray(_unwrap(f)[0], dtype=float)
    if p == 2:
        return sobolev_norm(grid, vals, -1.0)
    coeffs = grid.fft(vals) * grid.inv_k2
    grad = grid.ifft(np.stack([grid.ikx * coeffs, grid.iky * coeffs], axis=-3))
    return lebesgue_norm(grid, grad, p)
