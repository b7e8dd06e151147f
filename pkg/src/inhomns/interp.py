"""Periodic bicubic Hermite interpolation of spectrally sampled fields.

Nodal derivatives come from spectral differentiation, so the interpolant of a
band-limited field is fourth-order accurate and reproduces plateaus exactly.
With ``clip=True`` each value is limited to the range of the four corners of
its cell, which makes the interpolation monotone (no new extrema).

The compiled kernel in ``inhomns._interp`` is used when available; setting
``INHOMNS_PURE_PYTHON=1`` forces the NumPy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from .spectral import TorusGrid


def _hermite_numpy(nodal, xq, yq, h, clip):
    n = nodal.shape[2]
    sx = xq / h
    sy = yq / h
    fa = np.floor(sx)
    fb = np.floor(sy)
    a = sx - fa
    b = sy - fb
    i0 = fa.astype(np.int64) % n
    j0 = fb.astype(np.int64) % n
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n

    a0 = (2.0 * a - 3.0) * a * a + 1.0
    a1 = (3.0 - 2.0 * a) * a * a
    ad0 = ((a - 2.0) * a + 1.0) * a * h
    ad1 = (a - 1.0) * a * a * h
    b0 = (2.0 * b - 3.0) * b * b + 1.0
    b1 = (3.0 - 2.0 * b) * b * b
    bd0 = ((b - 2.0) * b + 1.0) * b * h
    bd1 = (b - 1.0) * b * b * h

    def corners(comp):
        c = nodal[:, comp]
        return c[:, i0, j0], c[:, i0, j1], c[:, i1, j0], c[:, i1, j1]

    v00, v01, v10, v11 = corners(0)
    x00, x01, x10, x11 = corners(1)
    y00, y01, y10, y11 = corners(2)
    m00, m01, m10, m11 = corners(3)
    out = (
        a0 * (b0 * v00 + b1 * v01)
        + a1 * (b0 * v10 + b1 * v11)
        + ad0 * (b0 * x00 + b1 * x01)
        + ad1 * (b0 * x10 + b1 * x11)
        + a0 * (bd0 * y00 + bd1 * y01)
        + a1 * (bd0 * y10 + bd1 * y11)
        + ad0 * (bd0 * m00 + bd1 * m01)
        + ad1 * (bd0 * m10 + bd1 * m11)
    )
    if clip:
        lo = np.minimum(np.minimum(v00, v01), np.minimum(v10, v11))
        hi = np.maximum(np.maximum(v00, v01), np.maximum(v10, v11))
        out = np.minimum(np.maximum(out, lo), hi)
    return out


hermite_numpy = _hermite_numpy

if os.environ.get("INHOMNS_PURE_PYTHON") == "1":
    _kernel = None
else:
    try:
        from ._interp import hermite_kernel as _kernel
    except ImportError:  # extension not built
        _kernel = None

BACKEND = "compiled" if _kernel is not None else "numpy"


def hermite_kernel(nodal, xq, yq, h, clip=False, backend=None):
    """Dispatch to the compiled or NumPy kernel.

    Parameters
    ----------
    nodal : ndarray, shape (m, 4, n, n)
        Value, x-derivative, y-derivative and mixed derivative per field.
    xq, yq : ndarray, shape (p,)
        Query coordinates (any real values; wrapped periodically).
    h : float
        Grid spacing.
    clip : bool
        Limit results to the range of the cell corners.
    backend : {"compiled", "numpy"}, optional
        Force a backend; defaults to the one selected at import.
    """
    nodal = np.ascontiguousarray(nodal, dtype=float)
    xq = np.ascontiguousarray(xq, dtype=float).ravel()
    yq = np.ascontiguousarray(yq, dtype=float).ravel()
    use = backend or BACKEND
    if use == "compiled":
        if _kernel is None:
            raise RuntimeError("compiled interpolation kernel is not available")
        return np.asarray(_kernel(nodal, xq, yq, float(h), bool(clip)))
    return _hermite_numpy(nodal, xq, yq, float(h), bool(clip))


def hermite_data(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Stack value and spectral x, y, xy derivatives for each field.

    ``values`` has shape ``(..., n, n)``; the result has shape ``(m, 4, n, n)``
    with ``m`` the number of leading fields.
    """
    values = np.asarray(values, dtype=float)
    flat = values.reshape(-1, grid.n, grid.n)
    coeffs = grid.fft(flat)
    derivs = grid.ifft(
        np.stack([grid.ikx * coeffs, grid.iky * coeffs, grid.ikx * grid.iky * coeffs], axis=1)
    )
    return np.concatenate([flat[:, None], derivs], axis=1)


def interpolate(grid: TorusGrid, values, xq, yq, clip=False, backend=None):
    """Evaluate fields at arbitrary points on the torus.

    Parameters
    ----------
    grid : TorusGrid
    values : ndarray, shape (..., n, n)
        One or more fields sampled on ``grid``.
    xq, yq : ndarray
        Query coordinates with a common shape ``S``.
    clip : bool
        Enforce the cell-corner range (monotone interpolation).

    Returns
    -------
    ndarray, shape (..., *S)
    """
    values = np.asarray(values, dtype=float)
    lead = values.shape[:-2]
    xq = np.asarray(xq, dtype=float)
    shape = xq.shape
    out = hermite_kernel(hermite_data(grid, values), xq, yq, grid.h, clip=clip, backend=backend)
    return out.reshape(lead + shape)
