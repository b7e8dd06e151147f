"""Time integration of the variable-density Navier-Stokes system.

Scheme
------
Density is transported semi-Lagrangian: the foot of the characteristic
``x - dt u^n(x)`` is evaluated with clipped Hermite interpolation, so the
density range never grows. Momentum ``m = rho u`` is advanced conservatively
with explicit dealiased convection and implicit viscosity::

    rho^{n+1} u^{n+1} + D u^{n+1} + dt grad P = rho^n u^n - dt div(rho^n v^n (x) u^n) + dt g^n

where ``D`` is the Fourier multiplier ``rbar (exp(mu |k|^2 dt / rbar) - 1)``
with ``rbar`` the mean of ``rho^{n+1}``. ``D`` reduces to ``mu dt |k|^2`` to
leading order and makes constant-density Stokes modes decay exactly. The
divergence-free ``u^{n+1}`` is found by preconditioned conjugate gradients on
the operator ``P(rho^{n+1} .) + D`` restricted to divergence-free fields.

The nonlinear run uses ``v = u``; the linearized system takes ``(rho, v)``
from an :class:`Environment`. The backward solver is the exact discrete
adjoint of the forward step, so duality identities hold to solver tolerance.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CflViolation, DensityOutOfBounds, InconsistentPair, InsufficientSnapshots
from .interp import interpolate
from .spectral import (
    TorusGrid,
    advect,
    dealias,
    divergence,
    gradient_hat,
    leray_hat,
)

__all__ = [
    "FlowState",
    "Trajectory",
    "Environment",
    "INSSolver",
    "step_density",
    "step_momentum",
    "run",
    "solve_linearized",
    "solve_backward",
    "solve_heat",
    "convective_derivative",
    "geometric_times",
    "step_schedule",
    "finite_difference",
]


# ---------------------------------------------------------------------------
# data containers


@dataclass
class FlowState:
    """Snapshot ``(t, rho, u, grad P)`` with optional time derivatives of ``u``."""

    t: float
    rho: np.ndarray
    u: np.ndarray
    grad_p: np.ndarray
    mu: float = 1.0
    u_t: np.ndarray | None = None
    u_tt: np.ndarray | None = None


@dataclass
class Trajectory:
    """Ordered snapshots plus per-step scalar diagnostics.

    ``environment`` is the ``(rho, v)`` path of a linearized run; it is
    ``None`` for nonlinear runs, where the transporting field is ``u`` itself.
    """

    grid: TorusGrid
    mu: float
    snapshots: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    environment: "Environment | None" = None
    kind: str = "nonlinear"

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def __len__(self):
        return len(self.snapshots)

    def snapshot_at(self, t: float, tol: float = 1e-9) -> FlowState:
        times = self.times
        idx = int(np.argmin(np.abs(times - t)))
        if abs(times[idx] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshots[idx]

    def transport_velocity(self, index: int) -> np.ndarray:
        """Velocity transporting the density at snapshot ``index``."""
        snap = self.snapshots[index]
        if self.environment is None:
            return snap.u
        return self.environment.at(snap.t)[1]

    def transport_velocity_rate(self, index: int) -> np.ndarray:
        """Time derivative of the transporting velocity at snapshot ``index``."""
        snap = self.snapshots[index]
        if self.environment is None:
            if snap.u_t is None:
                raise InsufficientSnapshots("snapshot lacks a time derivative")
            return snap.u_t
        return self.environment.velocity_rate(snap.t)

    def energy_residual(self) -> np.ndarray:
        """Relative residual of the energy balance at every step."""
        d = self.diagnostics
        e0 = d["energy"][0]
        if e0 == 0:
            return np.zeros_like(d["energy"])
        return np.abs(d["energy"] + d["dissipation"] - e0) / e0


class Environment:
    """Prescribed ``(rho, v)`` path for the linearized system.

    Frames are stored at increasing times and interpolated linearly. A single
    frame (or ``stationary=True``) gives a time-independent environment.
    """

    def __init__(self, grid: TorusGrid, times, rho, v, stationary: bool = False):
        self.grid = grid
        self.times = np.asarray(times, dtype=float).ravel()
        self.rho = np.asarray(rho, dtype=float).reshape(-1, grid.n, grid.n)
        self.v = np.asarray(v, dtype=float).reshape(-1, 2, grid.n, grid.n)
        if not (len(self.times) == len(self.rho) == len(self.v)):
            raise ValueError("environment frames and times have different lengths")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("environment times must increase strictly")
        if self.rho.min() <= 0:
            raise ValueError("environment density must be positive")
        self.stationary = stationary or len(self.times) == 1

    @classmethod
    def frozen(cls, grid: TorusGrid, rho, v=None) -> "Environment":
        rho = np.broadcast_to(np.asarray(rho, dtype=float), (grid.n, grid.n))
        v = np.zeros((2, grid.n, grid.n)) if v is None else np.asarray(v, dtype=float)
        return cls(grid, [0.0], rho[None], v[None], stationary=True)

    @property
    def t_end(self) -> float:
        return math.inf if self.stationary else float(self.times[-1])

    def _locate(self, t: float):
        if self.stationary:
            return 0, 0, 0.0
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] * (1 + 1e-12) + 1e-12:
            raise ValueError(f"time {t} outside environment range [{times[0]}, {times[-1]}]")
        k = bisect.bisect_right(times, t) - 1
        k = min(max(k, 0), len(times) - 1)
        if k == len(times) - 1 or abs(times[k] - t) <= 1e-12 * max(1.0, abs(t)):
            return k, k, 0.0
        if abs(times[k + 1] - t) <= 1e-12 * max(1.0, abs(t)):
            return k + 1, k + 1, 0.0
        theta = (t - times[k]) / (times[k + 1] - times[k])
        return k, k + 1, theta

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        k0, k1, theta = self._locate(t)
        if k0 == k1:
            return self.rho[k0], self.v[k0]
        rho = (1 - theta) * self.rho[k0] + theta * self.rho[k1]
        v = (1 - theta) * self.v[k0] + theta * self.v[k1]
        return rho, v

    def velocity_rate(self, t: float) -> np.ndarray:
        """Finite-difference time derivative of ``v``."""
        if self.stationary:
            return np.zeros_like(self.v[0])
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        k = min(max(k, 1), len(times) - 2) if len(times) >= 3 else None
        if k is None:
            return (self.v[-1] - self.v[0]) / (times[-1] - times[0])
        d1, _ = finite_difference(times[k - 1 : k + 2], self.v[k - 1 : k + 2], t)
        return d1

    def check_consistency(self, tol: float = 0.25, samples: int = 8) -> float:
        """Relative mass-equation residual ``||rho_t + div(rho v)||`` at sampled times.

        Raises
        ------
        InconsistentPair
            If the residual exceeds ``tol``.
        """
        grid = self.grid
        worst = 0.0
        if self.stationary:
            candidates = [0]
        else:
            candidates = np.unique(np.linspace(1, len(self.times) - 2, samples).astype(int)) if len(self.times) >= 3 else []
        for k in candidates:
            if self.stationary:
                rho_t = np.zeros_like(self.rho[0])
                rho, v = self.rho[0], self.v[0]
            else:
                rho_t, _ = finite_difference(self.times[k - 1 : k + 2], self.rho[k - 1 : k + 2], self.times[k])
                rho, v = self.rho[k], self.v[k]
            flux = divergence(grid, rho * v)
            res = math.sqrt(float(np.sum((rho_t + flux) ** 2)))
            scale = math.sqrt(float(np.sum(rho_t**2))) + math.sqrt(float(np.sum(flux**2)))
            scale += 1e-12 * math.sqrt(float(np.sum(rho**2)))
            worst = max(worst, res / scale)
        if worst > tol:
            raise InconsistentPair(f"mass equation residual {worst:.3g} exceeds {tol}")
        return worst

    def velocity_divergence(self) -> float:
        return max(
            float(np.abs(divergence(self.grid, self.v[k])).max()) for k in range(len(self.times))
        )


# ---------------------------------------------------------------------------
# time grids and finite differences


def geometric_times(t_first: float, t_end: float, ratio: float = 1.1) -> np.ndarray:
    """``[0, t1, t1 r, t1 r^2, ..., t_end]`` with the last entry exactly ``t_end``."""
    out = [0.0]
    t = t_first
    while t < t_end * (1 - 1e-9):
        out.append(t)
        t *= ratio
    out.append(t_end)
    return np.array(out)


def step_schedule(
    t_end: float,
    dt: float,
    growth: float = 1.0,
    dt_max: float | None = None,
    grow_after: float = 0.0,
) -> np.ndarray:
    """Step times from 0 to ``t_end``.

    The step is ``dt`` until ``grow_after`` and then multiplied by ``growth``
    per step up to ``dt_max``. The final step is shortened to land on ``t_end``.
    """
    if dt <= 0 or t_end < 0:
        raise ValueError("dt must be positive and t_end nonnegative")
    dt_max = dt if dt_max is None else dt_max
    times = [0.0]
    step = dt
    t = 0.0
    while t < t_end - 1e-12 * max(1.0, t_end):
        if t >= grow_after and growth > 1.0:
            step = min(step * growth, dt_max)
        nxt = t + step
        if nxt > t_end - 0.25 * step:
            nxt = t_end
        times.append(nxt)
        t = nxt
    if len(times) == 1 and t_end > 0:
        times.append(t_end)
    return np.array(times)


def finite_difference(times, values, at: float):
    """First and second derivatives at ``at`` of the quadratic through three samples."""
    t0, t1, t2 = (float(x) for x in times)
    f0, f1, f2 = values[0], values[1], values[2]
    d01, d02, d12 = t0 - t1, t0 - t2, t1 - t2
    # derivatives of the Lagrange basis
    l0 = ((at - t1) + (at - t2)) / (d01 * d02)
    l1 = ((at - t0) + (at - t2)) / (-d01 * d12)
    l2 = ((at - t0) + (at - t1)) / (d02 * d12)
    first = l0 * f0 + l1 * f1 + l2 * f2
    second = 2.0 * (f0 / (d01 * d02) - f1 / (d01 * d12) + f2 / (d02 * d12))
    return first, second


# ---------------------------------------------------------------------------
# density transport


def step_density(
    grid: TorusGrid, rho: np.ndarray, u: np.ndarray, dt: float, cfl: float = 0.5, clip: bool = True
) -> np.ndarray:
    """Semi-Lagrangian transport of ``rho`` by ``u`` over one step.

    Raises
    ------
    CflViolation
        If ``dt * max|u| * n / L`` exceeds ``cfl``.
    """
    rho = np.asarray(rho, dtype=float)
    speed = float(np.sqrt(np.max(np.sum(np.asarray(u) ** 2, axis=0))))
    courant = dt * speed * grid.n / grid.length
    if courant > cfl:
        raise CflViolation(f"Courant number {courant:.3g} exceeds {cfl}")
    lo, hi = rho.min(), rho.max()
    if lo == hi or speed == 0.0:
        return rho.copy()
    xq = grid.X - dt * u[0]
    yq = grid.Y - dt * u[1]
    out = interpolate(grid, rho, xq, yq, clip=clip)
    if clip:
        np.clip(out, lo, hi, out=out)
    return out


# ---------------------------------------------------------------------------
# momentum solver


class INSSolver:
    """Momentum and density stepping on one grid.

    Parameters
    ----------
    grid : TorusGrid
    mu : float
        Viscosity.
    cfl : float
        Advective Courant limit for the density step.
    cg_tol : float
        Relative residual target of the conjugate-gradient solves.
    cg_maxiter : int
    clip : bool
        Clip the density interpolation (keeps its range exactly).
    """

    def __init__(self, grid, mu=1.0, cfl=0.5, cg_tol=1e-12, cg_maxiter=400, clip=True):
        self.grid = grid
        self.mu = float(mu)
        self.cfl = float(cfl)
        self.cg_tol = float(cg_tol)
        self.cg_maxiter = int(cg_maxiter)
        self.clip = clip
        self.cg_iterations = []

    # -- building blocks ----------------------------------------------------
    def viscous_symbol(self, dt: float, rho_ref: float) -> np.ndarray:
        # modes damped below exp(-200) are negligible; the cap avoids overflow in CG
        arg = np.minimum(self.mu * dt * self.grid.k2 / rho_ref, 200.0)
        return rho_ref * np.expm1(arg)

    def convection(self, rho: np.ndarray, v: np.ndarray, u: np.ndarray) -> np.ndarray:
        """``div(M(rho v) (x) u)`` with every product dealiased."""
        g = self.grid
        m_hat = g.fft(rho * v) * g.dealias_mask
        m = g.ifft(m_hat)
        flux_hat = g.fft(m[None, :, :, :] * u[:, None, :, :]) * g.dealias_mask
        return g.ifft(g.ikx * flux_hat[:, 0] + g.iky * flux_hat[:, 1])

    def convection_adjoint(self, rho: np.ndarray, v: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Exact L2 adjoint of :meth:`convection` in its ``u`` argument."""
        g = self.grid
        m = g.ifft(g.fft(rho * v) * g.dealias_mask)
        y_hat = g.fft(y)
        dy = g.ifft(np.stack([g.ikx * y_hat, g.iky * y_hat], axis=1) * g.dealias_mask)
        return -(m[0] * dy[:, 0] + m[1] * dy[:, 1])

    def _pcg(self, apply, b_hat, x0_hat, precond):
        g = self.grid
        x = x0_hat.copy()
        r = b_hat - apply(x)
        bnorm = math.sqrt(max(g.spectral_inner(b_hat, b_hat), 0.0))
        if bnorm == 0.0:
            self.cg_iterations.append(0)
            return np.zeros_like(b_hat)
        target = self.cg_tol * bnorm
        z = precond * r
        p = z.copy()
        rz = g.spectral_inner(r, z)
        for it in range(1, self.cg_maxiter + 1):
            if math.sqrt(max(g.spectral_inner(r, r), 0.0)) <= target:
                self.cg_iterations.append(it - 1)
                return x
            ap = apply(p)
            curvature = g.spectral_inner(p, ap)
            if curvature <= 0.0 or rz == 0.0:
                self.cg_iterations.append(it - 1)
                return x
            alpha = rz / curvature
            x += alpha * p
            r -= alpha * ap
            z = precond * r
            rz_new = g.spectral_inner(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        self.cg_iterations.append(self.cg_maxiter)
        return x

    def solve_weighted(self, rho: np.ndarray, b_hat: np.ndarray, x0_hat, dt: float | None):
        """Solve ``P(rho x) + D x = b`` for divergence-free ``x`` (``D = 0`` if ``dt`` is None)."""
        g = self.grid
        rho_ref = float(np.mean(rho))
        visc = self.viscous_symbol(dt, rho_ref) if dt is not None else 0.0

        def apply(x_hat):
            return leray_hat(g, g.fft(rho * g.ifft(x_hat))) + visc * x_hat

        precond = 1.0 / (rho_ref + visc)
        if x0_hat is None:
            x0_hat = precond * b_hat
        return self._pcg(apply, b_hat, leray_hat(g, x0_hat), precond)

    def momentum_update(self, rho_old, rho_new, u_old, v_old, dt, source=None):
        """Advance velocity given both densities; returns ``(u_new, u_new_hat, grad_p)``."""
        g = self.grid
        rhs = rho_old * u_old
        if v_old is not None:
            rhs = rhs - dt * self.convection(rho_old, v_old, u_old)
        if source is not None:
            rhs = rhs + dt * source
        rhs_hat = g.fft(rhs)
        b_hat = leray_hat(g, rhs_hat)
        u_hat = self.solve_weighted(rho_new, b_hat, g.fft(u_old), dt)
        u_new = g.ifft(u_hat)
        grad_p = g.ifft(gradient_hat(g, rhs_hat - g.fft(rho_new * u_new))) / dt
        return u_new, u_hat, grad_p

    def step(self, state: FlowState, dt: float) -> FlowState:
        """One coupled step of the nonlinear system (density, then momentum)."""
        rho_new = step_density(self.grid, state.rho, state.u, dt, self.cfl, self.clip)
        u_new, _, grad_p = self.momentum_update(state.rho, rho_new, state.u, state.u, dt)
        return FlowState(state.t + dt, rho_new, u_new, grad_p, self.mu)

    def grad_norm2_hat(self, u_hat: np.ndarray) -> float:
        return self.grid.spectral_norm2(u_hat, self.grid.k2)


def step_momentum(state: FlowState, dt: float, grid: TorusGrid, **options) -> FlowState:
    """Advance a nonlinear state by one step (density transport included)."""
    return INSSolver(grid, mu=state.mu, **options).step(state, dt)


# ---------------------------------------------------------------------------
# snapshot recording


class _Recorder:
    """Collects snapshots and attaches finite-difference time derivatives.

    A snapshot taken at step ``s`` is finalized once step ``s + 1`` exists, so
    ``u_t`` is a centered difference and ``grad_p`` comes from the step that
    starts at ``s``.
    """

    def __init__(self, step_times, snapshot_steps, mu):
        self.step_times = step_times
        self.snapshot_steps = set(int(s) for s in snapshot_steps)
        self.mu = mu
        self.history = []  # (index, u) for the last three steps
        self.pending = None
        self.snapshots = []

    def _deriv(self, idx_list, at_idx):
        lookup = dict(self.history)
        times = [self.step_times[i] for i in idx_list]
        vals = [lookup[i] for i in idx_list]
        return finite_difference(times, vals, self.step_times[at_idx])

    def push(self, index, rho, u, grad_p_from_previous):
        """Register state ``index``; ``grad_p_from_previous`` belongs to step ``index - 1``."""
        self.history.append((index, u))
        if len(self.history) > 3:
            self.history.pop(0)
        if self.pending is not None and index == self.pending.index + 1:
            snap = self.pending.state
            s = self.pending.index
            snap.grad_p = grad_p_from_previous
            if s == 0:
                snap.u_t = (u - snap.u) / (self.step_times[1] - self.step_times[0])
            else:
                snap.u_t, snap.u_tt = self._deriv([s - 1, s, s + 1], s)
            self.pending = None
        if index in self.snapshot_steps:
            state = FlowState(float(self.step_times[index]), rho, u, None, self.mu)
            self.snapshots.append(state)
            self.pending = _Pending(index, state)

    def finish(self, last_grad_p):
        if self.pending is None:
            return
        snap = self.pending.state
        s = self.pending.index
        snap.grad_p = last_grad_p if last_grad_p is not None else np.zeros_like(snap.u)
        if s >= 2:
            snap.u_t, snap.u_tt = self._deriv([s - 2, s - 1, s], s)
        elif s == 1:
            lookup = dict(self.history)
            snap.u_t = (lookup[1] - lookup[0]) / (self.step_times[1] - self.step_times[0])
        self.pending = None


@dataclass
class _Pending:
    index: int
    state: FlowState


def _snapshot_steps(step_times: np.ndarray, output_times) -> list[int]:
    if output_times is None:
        return list(range(len(step_times)))
    idx = sorted({int(np.argmin(np.abs(step_times - t))) for t in output_times})
    return idx


def _diag_arrays(rows):
    keys = rows[0].keys()
    return {k: np.array([r[k] for r in rows]) for k in keys}


def _row(grid, solver, t, rho, u, u_hat, prev_grad2, dt):
    grad2 = solver.grad_norm2_hat(u_hat)
    momentum = grid.integrate(rho * u)
    return {
        "time": t,
        "energy": grid.inner(rho * u, u),
        "grad2": grad2,
        "dissipation_step": 0.0 if prev_grad2 is None else solver.mu * dt * (prev_grad2 + grad2),
        "rho_min": float(rho.min()),
        "rho_max": float(rho.max()),
        "mass": float(grid.integrate(rho)),
        "momentum_x": float(momentum[0]),
        "momentum_y": float(momentum[1]),
        "divergence_max": float(np.abs(grid.ifft(grid.ikx * u_hat[0] + grid.iky * u_hat[1])).max()),
    }


def _finalize_diagnostics(rows):
    diag = _diag_arrays(rows)
    diag["dissipation"] = np.cumsum(diag["dissipation_step"])
    return diag


# ---------------------------------------------------------------------------
# drivers


def run(
    grid: TorusGrid,
    rho0,
    u0,
    T: float,
    dt: float,
    mu: float = 1.0,
    output_times=None,
    step_times=None,
    record_environment: bool = False,
    environment_stride: int = 1,
    momentum_free: bool = False,
    check_density: bool = True,
    **solver_options,
) -> Trajectory:
    """Integrate the nonlinear system from ``(rho0, u0)`` up to time ``T``.

    Parameters
    ----------
    grid : TorusGrid
    rho0 : array_like
        Positive initial density (scalar broadcast allowed).
    u0 : ndarray, shape (2, n, n)
        Initial velocity; it is Leray-projected.
    T, dt : float
        Final time and (initial) step.
    output_times : sequence of float, optional
        Snapshot times, rounded to the nearest step; every step by default.
    step_times : ndarray, optional
        Explicit step schedule overriding ``T`` and ``dt``.
    record_environment : bool
        Store ``(rho, u)`` every ``environment_stride`` steps as an
        :class:`Environment` attached to the trajectory.
    momentum_free : bool
        Shift ``u0`` by a constant so that the initial momentum vanishes.

    Returns
    -------
    Trajectory
    """
    solver = INSSolver(grid, mu=mu, **solver_options)
    rho = np.array(np.broadcast_to(np.asarray(rho0, dtype=float), (grid.n, grid.n)))
    if rho.min() <= 0:
        raise ValueError("initial density must be positive")
    u = grid.ifft(leray_hat(grid, grid.fft(np.asarray(u0, dtype=float))))
    if momentum_free:
        u = u - (grid.integrate(rho * u) / grid.integrate(rho))[:, None, None]
    times = step_schedule(T, dt) if step_times is None else np.asarray(step_times, dtype=float)
    recorder = _Recorder(times, _snapshot_steps(times, output_times), mu)
    lo, hi = rho.min(), rho.max()

    env_t, env_rho, env_v = [], [], []
    u_hat = grid.fft(u)
    rows = [_row(grid, solver, 0.0, rho, u, u_hat, None, 0.0)]
    recorder.push(0, rho, u, None)
    if record_environment:
        env_t.append(0.0), env_rho.append(rho), env_v.append(u)
    grad_p = None
    nsteps = len(times) - 1
    for n in range(nsteps):
        step = times[n + 1] - times[n]
        rho_new = step_density(grid, rho, u, step, solver.cfl, solver.clip)
        if check_density and (rho_new.min() < lo or rho_new.max() > hi):
            raise DensityOutOfBounds("density left its initial range")
        u, u_hat, grad_p = solver.momentum_update(rho, rho_new, u, u, step)
        rho = rho_new
        rows.append(_row(grid, solver, times[n + 1], rho, u, u_hat, rows[-1]["grad2"], step))
        recorder.push(n + 1, rho, u, grad_p)
        if record_environment and ((n + 1) % environment_stride == 0 or n + 1 == nsteps):
            env_t.append(times[n + 1]), env_rho.append(rho), env_v.append(u)
    recorder.finish(grad_p)
    traj = Trajectory(grid, mu, recorder.snapshots, _finalize_diagnostics(rows), None, "nonlinear")
    traj.diagnostics["cg_iterations"] = np.array(solver.cg_iterations)
    traj.step_times = times
    if record_environment:
        traj.recorded_environment = Environment(grid, env_t, np.array(env_rho), np.array(env_v))
    return traj


def _env_schedule(env: Environment, T: float, dt: float | None, step_times=None) -> np.ndarray:
    if step_times is not None:
        times = np.asarray(step_times, dtype=float)
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("step_times must start at 0 and increase")
        return times
    if dt is None:
        if env.stationary:
            raise ValueError("a stationary environment needs an explicit dt")
        times = env.times[env.times <= T * (1 + 1e-12)]
        if abs(times[-1] - T) > 1e-9 * max(1.0, T):
            raise ValueError("environment does not have a frame at T; pass dt")
        return times
    return step_schedule(T, dt)


def solve_linearized(
    env: Environment,
    u0,
    T: float,
    dt: float | None = None,
    source: Callable[[float], np.ndarray] | None = None,
    output_times=None,
    mu: float = 1.0,
    check_pair: bool = True,
    pair_tol: float = 0.25,
    step_times=None,
    **solver_options,
) -> Trajectory:
    """Integrate the linear system transported by the environment ``(rho, v)``.

    ``(rho u)_t + div(rho v (x) u) - mu Laplacian(u) + grad P = g``, ``div u = 0``.

    When ``dt`` is omitted the environment's own frame times are used as step
    times, which reproduces the run that produced the environment.
    """
    grid = env.grid
    if check_pair:
        env.check_consistency(pair_tol)
    solver = INSSolver(grid, mu=mu, **solver_options)
    times = _env_schedule(env, T, dt, step_times)
    u = grid.ifft(leray_hat(grid, grid.fft(np.asarray(u0, dtype=float))))
    recorder = _Recorder(times, _snapshot_steps(times, output_times), mu)
    rho, v = env.at(times[0])
    u_hat = grid.fft(u)
    rows = [_row(grid, solver, times[0], rho, u, u_hat, None, 0.0)]
    recorder.push(0, rho, u, None)
    grad_p = None
    for n in range(len(times) - 1):
        step = times[n + 1] - times[n]
        rho_new, v_new = env.at(times[n + 1])
        g = None if source is None else source(times[n])
        u, u_hat, grad_p = solver.momentum_update(rho, rho_new, u, v, step, g)
        rho, v = rho_new, v_new
        rows.append(_row(grid, solver, times[n + 1], rho, u, u_hat, rows[-1]["grad2"], step))
        recorder.push(n + 1, rho, u, grad_p)
    recorder.finish(grad_p)
    traj = Trajectory(grid, mu, recorder.snapshots, _finalize_diagnostics(rows), env, "linearized")
    traj.step_times = times
    return traj


def solve_backward(
    env: Environment,
    T: float,
    dt: float | None = None,
    terminal=None,
    source: Callable[[float], np.ndarray] | None = None,
    output_times=None,
    mu: float = 1.0,
    check_pair: bool = True,
    pair_tol: float = 0.25,
    step_times=None,
    **solver_options,
) -> Trajectory:
    """Integrate the backward dual system from ``T`` down to 0.

    ``rho w_t + rho v . grad w + mu Laplacian(w) + grad Q = f``, ``div w = 0``,
    with ``w(T) = terminal`` (zero by default). The step is the exact discrete
    adjoint of :func:`solve_linearized` on the same step times, so for any
    forward solution ``u`` with zero source

    ``<rho^N u^N, w^N> - <rho^0 u^0, w^0> = sum_n dt_n <u^n, f^n>``.

    Snapshots are returned in increasing time order.
    """
    grid = env.grid
    if check_pair:
        env.check_consistency(pair_tol)
    solver = INSSolver(grid, mu=mu, **solver_options)
    times = _env_schedule(env, T, dt, step_times)
    nsteps = len(times) - 1
    if terminal is None:
        w = np.zeros((2, grid.n, grid.n))
    else:
        w = grid.ifft(leray_hat(grid, grid.fft(np.asarray(terminal, dtype=float))))
    snap_steps = set(_snapshot_steps(times, output_times))
    states = {}
    rho_next, _ = env.at(times[nsteps])
    if nsteps in snap_steps:
        states[nsteps] = FlowState(float(times[nsteps]), rho_next, w, np.zeros_like(w), mu)
    for n in range(nsteps - 1, -1, -1):
        step = times[n + 1] - times[n]
        rho, v = env.at(times[n])
        b_hat = leray_hat(grid, grid.fft(rho_next * w))
        y_hat = solver.solve_weighted(rho_next, b_hat, grid.fft(w), step)
        y = grid.ifft(y_hat)
        z = rho * y - step * solver.convection_adjoint(rho, v, y)
        if source is not None:
            z = z - step * source(times[n])
        z_hat = grid.fft(z)
        w_hat = solver.solve_weighted(rho, leray_hat(grid, z_hat), grid.fft(w), None)
        w_new = grid.ifft(w_hat)
        grad_q = grid.ifft(gradient_hat(grid, z_hat - grid.fft(rho * w_new))) / step
        w = w_new
        rho_next = rho
        if n in snap_steps:
            states[n] = FlowState(float(times[n]), rho, w, grad_q, mu)
    snaps = [states[k] for k in sorted(states)]
    traj = Trajectory(grid, mu, snaps, {}, env, "backward")
    traj.step_times = times
    return traj


def solve_heat(grid: TorusGrid, u0, times, mu: float = 1.0) -> Trajectory:
    """Exact spectral heat flow ``exp(mu t Laplacian) u0`` at the given times."""
    u0 = np.asarray(u0, dtype=float)
    u0_hat = grid.fft(u0)
    rho = np.ones((grid.n, grid.n))
    snaps = []
    for t in times:
        decay = np.exp(-mu * grid.k2 * t)
        u_hat = u0_hat * decay
        u = grid.ifft(u_hat)
        u_t = grid.ifft(-mu * grid.k2 * u_hat)
        u_tt = grid.ifft((mu * grid.k2) ** 2 * u_hat)
        snaps.append(FlowState(float(t), rho, u, np.zeros_like(u), mu, u_t, u_tt))
    env = Environment.frozen(grid, rho)
    return Trajectory(grid, mu, snaps, {}, env, "heat")


def convective_derivative(traj: Trajectory) -> list[dict]:
    """Time derivative, convective derivative and Stokes-reconstructed pressure.

    For each snapshot returns a dict with ``t``, ``u_t``, ``u_dot`` (``u_t +
    v . grad u``), ``grad_p`` (gradient part of ``mu Laplacian(u) - rho u_dot``)
    and ``stokes_residual`` (relative size of the divergence-free part of
    ``rho u_dot - mu Laplacian(u)``, which must vanish).

    Snapshots lacking stored derivatives use three-point differences across
    neighbouring snapshots.
    """
    snaps = traj.snapshots
    if len(snaps) < 3:
        raise InsufficientSnapshots("need at least three snapshots")
    grid = traj.grid
    times = traj.times
    out = []
    for i, snap in enumerate(snaps):
        if snap.u_t is not None:
            u_t = snap.u_t
        else:
            k = min(max(i, 1), len(snaps) - 2)
            u_t, _ = finite_difference(times[k - 1 : k + 2], [s.u for s in snaps[k - 1 : k + 2]], snap.t)
        v = traj.transport_velocity(i)
        u_dot = u_t + advect(grid, v, snap.u)
        lap_hat = -grid.k2 * grid.fft(snap.u)
        rhs_hat = traj.mu * lap_hat - grid.fft(snap.rho * u_dot)
        grad_p = grid.ifft(gradient_hat(grid, rhs_hat))
        sol_part = leray_hat(grid, rhs_hat)
        scale = math.sqrt(grid.spectral_norm2(grid.fft(snap.rho * u_dot))) + math.sqrt(
            grid.spectral_norm2(traj.mu * lap_hat)
        )
        resid = math.sqrt(grid.spectral_norm2(sol_part)) / scale if scale > 0 else 0.0
        out.append(
            {"t": snap.t, "u_t": u_t, "u_dot": u_dot, "grad_p": grad_p, "stokes_residual": resid}
        )
    return out
