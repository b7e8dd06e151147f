"""Flow maps, Lagrangian coordinates, the divergence fixed point and stability metrics."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid, trapezoid

from .errors import InsufficientSnapshots, MismatchedRuns, MismatchedTimes, NoContraction
from .interp import hermite_kernel
from .norms import l2_norm, lebesgue_norm
from .solver import Trajectory, finite_difference
from .spectral import TorusGrid, gradient_hat
from .stokes import wminus1p_norm

_TINY = 1e-300


# ---------------------------------------------------------------------------
# small matrix-field helpers (matrices have shape (2, 2, ...))


def cofactor(matrix: np.ndarray) -> np.ndarray:
    """Transposed cofactor ``[[d, -b], [-c, a]]``; the inverse when ``det = 1``."""
    a, b = matrix[0, 0], matrix[0, 1]
    c, d = matrix[1, 0], matrix[1, 1]
    return np.stack([np.stack([d, -b]), np.stack([-c, a])])


def determinant(matrix: np.ndarray) -> np.ndarray:
    return matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0]


def matmul(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Pointwise product of matrix fields."""
    return np.einsum("ik...,kj...->ij...", left, right)


def matvec(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    return np.einsum("ik...,k...->i...", matrix, vector)


def _identity(shape) -> np.ndarray:
    eye = np.zeros((2, 2) + tuple(shape))
    eye[0, 0] = 1.0
    eye[1, 1] = 1.0
    return eye


def _jacobian_hat(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    """Spectral ``J[i, k] = d_k u^i`` of a vector field given by its coefficients."""
    return np.stack([grid.ikx * u_hat, grid.iky * u_hat], axis=1)


def _nodal(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Hermite nodal data ``(m, 4, n, n)`` from spectral coefficients ``(m, ...)``."""
    stacked = np.stack(
        [coeffs, grid.ikx * coeffs, grid.iky * coeffs, grid.ikx * grid.iky * coeffs], axis=1
    )
    return grid.ifft(stacked)


def _sample(grid: TorusGrid, coeffs: np.ndarray, xq: np.ndarray, yq: np.ndarray, backend=None):
    """Evaluate fields with coefficients ``(m, ...)`` at flat query points."""
    return hermite_kernel(_nodal(grid, coeffs), xq, yq, grid.h, False, backend)


# ---------------------------------------------------------------------------
# flow map


@dataclass
class FlowMap:
    """Flow map ``X(t, y) = y + displacement(t, y)`` sampled on the grid.

    Attributes
    ----------
    grid : TorusGrid
    times : ndarray, shape (m,)
    displacement : ndarray, shape (m, 2, n, n)
        ``X - y``; periodic, so safe to store on the torus.
    DX : ndarray, shape (m, 2, 2, n, n)
        ``Id + int_0^t Dv``, integrated along trajectories.
    Dv : ndarray, shape (m, 2, 2, n, n)
        Lagrangian velocity gradient ``grad u(t, X) DX`` at the output times.
    """

    grid: TorusGrid
    times: np.ndarray
    displacement: np.ndarray
    DX: np.ndarray
    Dv: np.ndarray

    @property
    def A(self) -> np.ndarray:
        """Cofactor matrix of ``DX`` (its inverse for volume-preserving flows)."""
        return np.stack([cofactor(m) for m in self.DX])

    @property
    def det(self) -> np.ndarray:
        return np.stack([determinant(m) for m in self.DX])

    def positions(self, index: int) -> np.ndarray:
        return self.displacement[index] + np.stack([self.grid.X, self.grid.Y])

    def volume_error(self) -> float:
        """``max |det DX - 1|`` over all times and points."""
        return float(np.max(np.abs(self.det - 1.0)))

    def inverse_error(self) -> float:
        """``max |A DX - Id|`` over all times and points."""
        eye = _identity((self.grid.n, self.grid.n))
        return float(max(np.max(np.abs(matmul(a, d) - eye)) for a, d in zip(self.A, self.DX)))


class _VelocityClock:
    """Cubic Lagrange interpolation in time of snapshot velocities."""

    def __init__(self, traj: Trajectory):
        self.grid = traj.grid
        self.times = traj.times
        self.coeffs = [self.grid.fft(s.u) for s in traj.snapshots]
        self.order = min(4, len(self.times))

    def __call__(self, t: float) -> np.ndarray:
        times = self.times
        m = len(times)
        i = int(np.searchsorted(times, t, side="right")) - 1
        start = min(max(i - 1, 0), m - self.order)
        idx = range(start, start + self.order)
        out = np.zeros_like(self.coeffs[0])
        for a in idx:
            weight = 1.0
            for b in idx:
                if b != a:
                    weight *= (t - times[b]) / (times[a] - times[b])
            if weight != 0.0:
                out = out + weight * self.coeffs[a]
        return out


def integrate_flow(traj: Trajectory, dt: float | None = None, backend=None) -> FlowMap:
    """Integrate ``dX/dt = u(t, X)`` and ``dDX/dt = grad u(t, X) DX`` with RK4.

    Parameters
    ----------
    traj : Trajectory
        Velocity snapshots; values between snapshots use cubic Lagrange
        interpolation in time and bicubic Hermite interpolation in space.
    dt : float, optional
        Flow step; defaults to the solver step (the median spacing of
        ``traj.step_times`` when present, else of the snapshot times).
    backend : str, optional
        Interpolation backend (``"compiled"`` or ``"numpy"``).

    Returns
    -------
    FlowMap
        Sampled at the snapshot times.
    """
    if len(traj.snapshots) < 2:
        raise InsufficientSnapshots("integrate_flow needs at least two snapshots")
    grid = traj.grid
    times = traj.times
    if dt is None:
        steps = getattr(traj, "step_times", None)
        source = np.diff(steps) if steps is not None and len(steps) > 1 else np.diff(times)
        dt = float(np.median(source))
    clock = _VelocityClock(traj)
    y1, y2 = grid.X.ravel(), grid.Y.ravel()
    npts = y1.size

    cache: dict = {}

    def nodal_at(t):
        # RK4 evaluates each time twice (midpoint stages, step ends)
        if t not in cache:
            if len(cache) >= 2:
                cache.pop(next(iter(cache)))
            u_hat = clock(t)
            coeffs = np.concatenate([u_hat, _jacobian_hat(grid, u_hat).reshape(4, *u_hat.shape[1:])])
            cache[t] = _nodal(grid, coeffs)
        return cache[t]

    def rates(t, disp, mat):
        vals = hermite_kernel(nodal_at(t), y1 + disp[0], y2 + disp[1], grid.h, False, backend)
        vel = vals[:2]
        jac = vals[2:].reshape(2, 2, npts)
        return vel, matvec_flat(jac, mat), jac

    def matvec_flat(jac, mat):
        return np.einsum("ik...,kj...->ij...", jac, mat)

    disp = np.zeros((2, npts))
    mat = _identity((npts,))
    out_disp, out_dx, out_dv = [], [], []

    def record(t):
        _, dv, _ = rates(t, disp, mat)
        out_disp.append(disp.reshape(2, grid.n, grid.n).copy())
        out_dx.append(mat.reshape(2, 2, grid.n, grid.n).copy())
        out_dv.append(dv.reshape(2, 2, grid.n, grid.n))

    record(times[0])
    for a, b in zip(times[:-1], times[1:]):
        count = max(1, int(math.ceil((b - a) / dt - 1e-9)))
        h = (b - a) / count
        for k in range(count):
            t = a + k * h
            k1x, k1m, _ = rates(t, disp, mat)
            k2x, k2m, _ = rates(t + 0.5 * h, disp + 0.5 * h * k1x, mat + 0.5 * h * k1m)
            k3x, k3m, _ = rates(t + 0.5 * h, disp + 0.5 * h * k2x, mat + 0.5 * h * k2m)
            t_next = b if k == count - 1 else a + (k + 1) * h
            k4x, k4m, _ = rates(t_next, disp + h * k3x, mat + h * k3m)
            disp = disp + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            mat = mat + h / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
        record(b)
    return FlowMap(grid, np.array(times), np.array(out_disp), np.array(out_dx), np.array(out_dv))


# ---------------------------------------------------------------------------
# Eulerian <-> Lagrangian


@dataclass
class LagrangianPath:
    """Velocity ``v(t, y) = u(t, X(t, y))`` and pressure ``Q(t, y) = P(t, X(t, y))``."""

    times: np.ndarray
    v: np.ndarray
    Q: np.ndarray


@dataclass
class EulerianPath:
    """Eulerian velocity and pressure reconstructed from a Lagrangian path."""

    times: np.ndarray
    u: np.ndarray
    P: np.ndarray


def _check_times(a, b, what="flow"):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or not np.allclose(a, b, rtol=0, atol=1e-9 * max(1.0, float(np.max(np.abs(a))))):
        raise MismatchedTimes(f"{what} times do not match the trajectory times")


def pressure_from_gradient(grid: TorusGrid, grad_p: np.ndarray) -> np.ndarray:
    """Mean-free potential of a gradient field."""
    coeffs = grid.fft(grad_p)
    return grid.ifft(-(grid.ikx * coeffs[0] + grid.iky * coeffs[1]) * grid.inv_kd2)


def to_lagrangian(traj: Trajectory, flow: FlowMap, backend=None) -> LagrangianPath:
    """Compose velocity and pressure with the flow map."""
    _check_times(traj.times, flow.times)
    grid = traj.grid
    vs, qs = [], []
    for i, snap in enumerate(traj.snapshots):
        pos = flow.positions(i)
        grad_p = snap.grad_p if snap.grad_p is not None else np.zeros_like(snap.u)
        coeffs = grid.fft(np.concatenate([snap.u, pressure_from_gradient(grid, grad_p)[None]]))
        vals = _sample(grid, coeffs, pos[0].ravel(), pos[1].ravel(), backend)
        vals = vals.reshape(3, grid.n, grid.n)
        vs.append(vals[:2])
        qs.append(vals[2])
    return LagrangianPath(np.array(traj.times), np.array(vs), np.array(qs))


def inverse_positions(flow: FlowMap, index: int, tol: float = 1e-13, maxiter: int = 30, backend=None):
    """Labels ``y`` with ``X(t, y) = x`` for every grid node ``x`` (Newton iteration)."""
    grid = flow.grid
    L = grid.length
    x1, x2 = grid.X.ravel(), grid.Y.ravel()
    coeffs = grid.fft(
        np.concatenate([flow.displacement[index], flow.DX[index].reshape(4, grid.n, grid.n)])
    )
    nodal = _nodal(grid, coeffs)
    disp0 = hermite_kernel(nodal[:2], x1, x2, grid.h, False, backend)
    y1, y2 = x1 - disp0[0], x2 - disp0[1]
    for _ in range(maxiter):
        vals = hermite_kernel(nodal, y1, y2, grid.h, False, backend)
        r1 = (y1 + vals[0] - x1 + 0.5 * L) % L - 0.5 * L
        r2 = (y2 + vals[1] - x2 + 0.5 * L) % L - 0.5 * L
        if max(np.max(np.abs(r1)), np.max(np.abs(r2))) < tol * L:
            break
        a, b, c, d = vals[2], vals[3], vals[4], vals[5]
        det = a * d - b * c
        y1 = y1 - (d * r1 - b * r2) / det
        y2 = y2 - (-c * r1 + a * r2) / det
    return y1, y2


def from_lagrangian(path: LagrangianPath, flow: FlowMap, backend=None) -> EulerianPath:
    """Invert :func:`to_lagrangian` by composing with the inverse flow map."""
    _check_times(path.times, flow.times)
    grid = flow.grid
    us, ps = [], []
    for i in range(len(path.times)):
        y1, y2 = inverse_positions(flow, i, backend=backend)
        coeffs = grid.fft(np.concatenate([path.v[i], path.Q[i][None]]))
        vals = _sample(grid, coeffs, y1, y2, backend).reshape(3, grid.n, grid.n)
        us.append(vals[:2])
        ps.append(vals[2])
    return EulerianPath(np.array(path.times), np.array(us), np.array(ps))


def roundtrip_error(traj: Trajectory, flow: FlowMap, backend=None) -> float:
    """``max_t ||from_lagrangian(to_lagrangian(u)) - u||_{L2} / ||u||_{L2}``."""
    back = from_lagrangian(to_lagrangian(traj, flow, backend), flow, backend)
    grid = traj.grid
    worst = 0.0
    for snap, u in zip(traj.snapshots, back.u):
        scale = l2_norm(grid, snap.u)
        if scale > 0:
            worst = max(worst, l2_norm(grid, u - snap.u) / scale)
    return worst


def _grad_y(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """Spectral gradient with the derivative index appended after the field index."""
    coeffs = grid.fft(f)
    return grid.ifft(np.stack([grid.ikx * coeffs, grid.iky * coeffs], axis=f.ndim - 2))


def lagrangian_residual(rho0, path: LagrangianPath, flow: FlowMap, mu: float = 1.0) -> dict:
    """Residual of ``rho0 v_t - div_y(A A^T grad_y v) + A^T grad_y Q = 0``.

    Evaluated at interior times with a three-point difference for ``v_t``.

    Returns
    -------
    dict
        ``times``, absolute ``residual`` (L2) and ``relative`` residual, the
        latter scaled by the largest of the three term norms.
    """
    _check_times(path.times, flow.times)
    grid = flow.grid
    rho0 = np.broadcast_to(np.asarray(rho0, dtype=float), (grid.n, grid.n))
    times = path.times
    m = len(times)
    if m < 3:
        raise InsufficientSnapshots("lagrangian_residual needs at least three times")
    out_t, abs_res, rel_res = [], [], []
    for i in range(1, m - 1):
        v_t, _ = finite_difference(times[i - 1 : i + 2], path.v[i - 1 : i + 2], times[i])
        A = cofactor(flow.DX[i])
        grad_v = _grad_y(grid, path.v[i])  # [i, k] = d_k v^i
        eul_grad = np.einsum("kl...,ik...->il...", A, grad_v)  # (A^T grad_y v^i)_l
        flux = np.einsum("ml...,il...->im...", A, eul_grad)  # A (A^T grad_y v^i)
        flux_hat = grid.fft(flux)
        viscous = grid.ifft(grid.ikx * flux_hat[:, 0] + grid.iky * flux_hat[:, 1])
        grad_q = _grad_y(grid, path.Q[i])
        pressure = np.einsum("kl...,k...->l...", A, grad_q)
        inertia = rho0 * v_t
        resid = inertia - mu * viscous + pressure
        scale = max(l2_norm(grid, inertia), l2_norm(grid, mu * viscous), l2_norm(grid, pressure))
        out_t.append(times[i])
        abs_res.append(l2_norm(grid, resid))
        rel_res.append(abs_res[-1] / scale if scale > 0 else 0.0)
    return {"times": np.array(out_t), "residual": np.array(abs_res), "relative": np.array(rel_res)}


# ---------------------------------------------------------------------------
# divergence fixed point


def smallness_quantity(traj: Trajectory) -> float:
    """``||grad u||_{L2(0,T x Omega)} + ||grad u||_{L1(0,T; Linf)}`` over the snapshots."""
    grid = traj.grid
    times = traj.times
    l2sq, linf = [], []
    for snap in traj.snapshots:
        grad = _grad_y(grid, snap.u)
        l2sq.append(l2_norm(grid, grad) ** 2)
        linf.append(lebesgue_norm(grid, grad, np.inf))
    if len(times) < 2:
        return 0.0
    return math.sqrt(float(trapezoid(l2sq, times))) + float(trapezoid(linf, times))


@dataclass
class FixedPointResult:
    """Output of :func:`divergence_fixed_point`.

    Attributes
    ----------
    w : ndarray, shape (m, 2, n, n)
    iterations : int
    factors : list of float
        Contraction factor ``||w_{k+1} - w_k|| / ||w_k - w_{k-1}||`` per iteration.
    increment : float
        Final ``sup_t ||Phi(w) - w||_{L2}``.
    divergence_error : float
        ``sup_t ||div(A w) - div k|| / sup_t ||div k||``.
    gradient_ratio : float
        ``||grad w||_{L2_T L2} / ||div k||_{L2_T L2}``.
    smallness : float or None
    """

    w: np.ndarray
    iterations: int
    factors: list = field(default_factory=list)
    increment: float = 0.0
    divergence_error: float = 0.0
    gradient_ratio: float = 0.0
    smallness: float | None = None


def _bogovskii_path(grid: TorusGrid, fields: np.ndarray) -> np.ndarray:
    return grid.ifft(gradient_hat(grid, grid.fft(fields)))


def _sup_l2(grid, fields):
    return max((l2_norm(grid, f) for f in fields), default=0.0)


def _divergence(grid, fields):
    coeffs = grid.fft(fields)
    return grid.ifft(grid.ikx * coeffs[..., 0, :, :] + grid.iky * coeffs[..., 1, :, :])


def divergence_fixed_point(
    flow: FlowMap,
    k_path,
    tol: float = 1e-10,
    maxiter: int = 200,
    smallness: float | None = None,
    threshold: float = 0.1,
) -> FixedPointResult:
    """Solve ``div(A w) = div k`` by iterating ``w -> B(k + (Id - A) w)``.

    ``B`` is the gradient projector (a right inverse of the divergence). The
    iteration runs on the whole time path at once, with the sup-in-time L2
    norm measuring increments.

    Raises
    ------
    NoContraction
        When the contraction factor is at least 1 for three consecutive iterations.
    """
    grid = flow.grid
    k_path = np.asarray(k_path, dtype=float)
    if k_path.shape[0] != len(flow.times):
        raise MismatchedTimes("k_path must be sampled at the flow times")
    if smallness is not None and smallness > threshold:
        warnings.warn(
            f"smallness quantity {smallness:.3g} exceeds {threshold}; contraction not guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )
    A = np.stack([cofactor(m) for m in flow.DX])
    eye = _identity((grid.n, grid.n))
    defect = eye[None] - A

    def phi(w):
        return _bogovskii_path(grid, k_path + np.einsum("tij...,tj...->ti...", defect, w))

    scale = max(_sup_l2(grid, _bogovskii_path(grid, k_path)), 1.0)
    w = np.zeros_like(k_path)
    factors = []
    previous = None
    bad = 0
    increment = 0.0
    iterations = 0
    for iterations in range(1, maxiter + 1):
        w_new = phi(w)
        increment = _sup_l2(grid, w_new - w)
        if previous is not None and previous > 0:
            factor = increment / previous
            factors.append(factor)
            bad = bad + 1 if factor >= 1.0 else 0
            if bad >= 3:
                raise NoContraction(f"contraction factor >= 1 for 3 iterations (last {factor:.3g})")
        w = w_new
        previous = increment
        if increment < tol * scale:
            break
    div_k = _divergence(grid, k_path)
    div_aw = _divergence(grid, np.einsum("tij...,tj...->ti...", A, w))
    denom = _sup_l2(grid, div_k)
    div_err = _sup_l2(grid, div_aw - div_k) / denom if denom > 0 else _sup_l2(grid, div_aw)
    times = flow.times
    grad_sq = [l2_norm(grid, _grad_y(grid, wt)) ** 2 for wt in w]
    divk_sq = [l2_norm(grid, d) ** 2 for d in div_k]
    if len(times) > 1:
        grad_int, divk_int = float(trapezoid(grad_sq, times)), float(trapezoid(divk_sq, times))
    else:
        grad_int, divk_int = grad_sq[0], divk_sq[0]
    ratio = math.sqrt(grad_int / divk_int) if divk_int > 0 else 0.0
    return FixedPointResult(w, iterations, factors, increment, div_err, ratio, smallness)


# ---------------------------------------------------------------------------
# stability


@dataclass
class StabilityReport:
    """Difference norms of two runs and the dimensionless stability ratios.

    Attributes
    ----------
    sup_du : float
        ``sup_t ||sqrt(rho_0^1) du(t)||_{L2}``.
    grad_du : float
        ``||grad du||_{L2(0,T x Omega)}``.
    drho_series : dict
        ``p -> ||drho(t)||_{W^{-1,p}}`` per snapshot.
    du0, drho0_inf : float
        Input sizes ``||sqrt(rho_0^1) du_0||_{L2}`` and ``||drho_0||_inf``.
    drho0_w : dict
        ``p -> ||drho_0||_{W^{-1,p}}``.
    stabu_ratio : float
        ``(sup_du + grad_du) / (du0 + drho0_inf)``.
    stabrho_ratio : dict
        ``p -> sup_{t>0} ||drho(t)|| / (||drho_0|| + t^{1/2+1/p} (du0 + drho0_inf))``.
    lagrangian : dict
        With flow maps: the two assemblies of ``dA`` and both sides of the
        constant-free inequality.
    """

    times: np.ndarray
    sup_du: float
    grad_du: float
    drho_series: dict
    du0: float
    drho0_inf: float
    drho0_w: dict
    stabu_ratio: float
    stabrho_ratio: dict
    lagrangian: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def clean(value):
            if isinstance(value, dict):
                return {str(k): clean(v) for k, v in value.items()}
            if isinstance(value, np.ndarray):
                return [float(x) for x in value.ravel()]
            if isinstance(value, (bool, np.bool_)):
                return bool(value)
            return float(value)

        return {
            "times": clean(self.times),
            "sup_du": self.sup_du,
            "grad_du": self.grad_du,
            "drho_series": clean(self.drho_series),
            "du0": self.du0,
            "drho0_inf": self.drho0_inf,
            "drho0_w": clean(self.drho0_w),
            "stabu_ratio": self.stabu_ratio,
            "stabrho_ratio": clean(self.stabrho_ratio),
            "lagrangian": clean(self.lagrangian),
        }


def _check_runs(traj1: Trajectory, traj2: Trajectory):
    if traj1.grid != traj2.grid:
        raise MismatchedRuns("runs use different grids")
    if traj1.mu != traj2.mu:
        raise MismatchedRuns("runs use different viscosities")
    t1, t2 = traj1.times, traj2.times
    if t1.shape != t2.shape or not np.allclose(t1, t2, rtol=0, atol=1e-9):
        raise MismatchedRuns("runs have different snapshot times")


def _ratio(num, den):
    if den > 0:
        return num / den
    return 0.0 if num == 0 else math.inf


def delta_A(flow1: FlowMap, flow2: FlowMap) -> dict:
    """``dA = A^2 - A^1`` assembled directly and from ``int_0^t d(Dv)``.

    Returns the direct field, the Simpson-integrated formula, the trapezoid
    formula and the max relative discrepancy of the first two.
    """
    grid = flow1.grid
    times = flow1.times
    d_dv = flow2.Dv - flow1.Dv
    direct = np.stack([cofactor(m) for m in flow2.DX]) - np.stack([cofactor(m) for m in flow1.DX])
    if len(times) >= 3:
        integral = cumulative_simpson(d_dv, x=times, axis=0, initial=0.0)
    else:
        integral = cumulative_trapezoid(d_dv, times, axis=0, initial=0.0)
    formula = np.stack([cofactor(m) for m in integral])
    trap = np.stack([cofactor(m) for m in cumulative_trapezoid(d_dv, times, axis=0, initial=0.0)])
    scale = max(max((l2_norm(grid, d) for d in direct), default=0.0), _TINY)
    mismatch = max(l2_norm(grid, a - b) for a, b in zip(formula, direct)) / scale
    return {"direct": direct, "formula": formula, "trapezoid": trap, "mismatch": mismatch}


def stability_compare(
    traj1: Trajectory,
    traj2: Trajectory,
    p_values=(2.0, 4.0),
    flow1: FlowMap | None = None,
    flow2: FlowMap | None = None,
) -> StabilityReport:
    """Stability metrics between two runs sharing grid, viscosity and snapshot times."""
    _check_runs(traj1, traj2)
    grid = traj1.grid
    times = traj1.times
    s1, s2 = traj1.snapshots, traj2.snapshots
    weight = np.sqrt(s1[0].rho)
    du = [b.u - a.u for a, b in zip(s1, s2)]
    drho = [b.rho - a.rho for a, b in zip(s1, s2)]
    sup_du = max(l2_norm(grid, weight * d) for d in du)
    grad_sq = [l2_norm(grid, _grad_y(grid, d)) ** 2 for d in du]
    grad_du = math.sqrt(float(trapezoid(grad_sq, times))) if len(times) > 1 else 0.0
    du0 = l2_norm(grid, weight * du[0])
    drho0_inf = float(np.max(np.abs(drho[0])))
    drho_series, drho0_w, stabrho = {}, {}, {}
    data = du0 + drho0_inf
    for p in p_values:
        series = np.array([wminus1p_norm(grid, d, p) for d in drho])
        drho_series[float(p)] = series
        drho0_w[float(p)] = float(series[0])
        ratios = [
            _ratio(series[i], series[0] + t ** (0.5 + 1.0 / p) * data)
            for i, t in enumerate(times)
            if t > 0
        ]
        stabrho[float(p)] = float(max(ratios, default=0.0))
    report = StabilityReport(
        times=np.array(times),
        sup_du=float(sup_du),
        grad_du=float(grad_du),
        drho_series=drho_series,
        du0=float(du0),
        drho0_inf=drho0_inf,
        drho0_w=drho0_w,
        stabu_ratio=float(_ratio(sup_du + grad_du, data)),
        stabrho_ratio=stabrho,
    )
    if flow1 is not None and flow2 is not None:
        _check_times(flow1.times, times)
        _check_times(flow2.times, times)
        report.lagrangian = dA_inequality(flow1, flow2)
    return report


def dA_inequality(flow1: FlowMap, flow2: FlowMap) -> dict:
    """Both sides of ``max(sup t^{-1/2}||dA||, ||dA_t||_{L2}) <= ||grad dv||_{L2}``.

    ``dA`` is the trapezoid-integrated formula and ``grad dv`` the difference
    of the Lagrangian velocity gradients on the same nodes, so the inequality
    holds exactly up to rounding (weighted Cauchy-Schwarz).
    """
    grid = flow1.grid
    times = flow1.times
    parts = delta_A(flow1, flow2)
    d_dv = flow2.Dv - flow1.Dv
    grad_sq = np.array([l2_norm(grid, d) ** 2 for d in d_dv])
    rhs = math.sqrt(float(trapezoid(grad_sq, times))) if len(times) > 1 else 0.0
    sup_term = max(
        (l2_norm(grid, a) / math.sqrt(t) for a, t in zip(parts["trapezoid"], times) if t > 0),
        default=0.0,
    )
    rate_sq = np.array([l2_norm(grid, cofactor(d)) ** 2 for d in d_dv])
    rate_term = math.sqrt(float(trapezoid(rate_sq, times))) if len(times) > 1 else 0.0
    lhs = max(sup_term, rate_term)
    return {
        "dA_sup_term": sup_term,
        "dA_rate_term": rate_term,
        "dA_lhs": lhs,
        "grad_dv_l2": rhs,
        "dA_holds": bool(lhs <= rhs * (1 + 1e-6) + 1e-14),
        "dA_mismatch": parts["mismatch"],
    }


__all__ = [
    "EulerianPath",
    "FixedPointResult",
    "FlowMap",
    "LagrangianPath",
    "StabilityReport",
    "cofactor",
    "dA_inequality",
    "delta_A",
    "determinant",
    "divergence_fixed_point",
    "from_lagrangian",
    "integrate_flow",
    "inverse_positions",
    "lagrangian_residual",
    "pressure_from_gradient",
    "roundtrip_error",
    "smallness_quantity",
    "stability_compare",
    "to_lagrangian",
]
