"""Dynamic interpolation: evolve dyadic atoms separately and assemble budgets.

The data are split into projected Littlewood-Paley blocks. Each block is
evolved on its own (exact heat flow, or the linearized system in a shared
density/velocity environment), its Lipschitz integral is split at the scale
dependent threshold ``A_j = 2**(-j/s)``, and the pieces are summed.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .decay import _plateau, decay_record, lipschitz_budget
from .errors import MissingAtomRuns, TailNotConverged
from .norms import atom_tally_terms, atomic_decompose, besov_b021_norm, l2_norm, lebesgue_norm
from .solver import Environment, FlowState, Trajectory, solve_linearized
from .spectral import TorusGrid

_TINY = 1e-300


def default_heat_times(t_first: float = 1e-6, t_end: float = 40.0, count: int = 1200) -> np.ndarray:
    """``0`` followed by a geometric grid on ``[t_first, t_end]``."""
    return np.concatenate([[0.0], np.geomspace(t_first, t_end, count)])


def _bound_exponents(s: float) -> tuple[float, float]:
    """Time exponents of the two per-atom bounds for ``||grad u_j||_inf`` in 2D."""
    return (2.0 - s) / 2.0, (2.0 + s) / 2.0


def _split(times, series, threshold):
    """Integrals of ``series`` over ``[0, threshold]`` and ``[threshold, T]``."""
    cum = cumulative_trapezoid(series, times, initial=0.0)
    total = float(cum[-1])
    low = float(np.interp(threshold, times, cum))
    return total, low, total - low


def _atom_summary(times, grad_linf, j, hs, hms, s):
    """Budget, split integrals, measured per-atom constants and crossover."""
    threshold = 2.0 ** (-j / s)
    budget, low, high = _split(times, grad_linf, threshold)
    alpha, beta = _bound_exponents(s)
    c_hs = float(np.max(times**alpha * grad_linf)) / hs if hs > 0 else 0.0
    c_hms = float(np.max(times**beta * grad_linf)) / hms if hms > 0 else 0.0
    # t^{-alpha} c_hs hs = t^{-beta} c_hms hms  <=>  t^{beta - alpha} = c_hms hms / (c_hs hs)
    if c_hs > 0 and hs > 0:
        crossover = (c_hms * hms / (c_hs * hs)) ** (1.0 / (beta - alpha))
    else:
        crossover = float("nan")
    split_bound = 0.0
    if hs > 0:
        split_bound += c_hs * hs * threshold ** (1.0 - alpha) / (1.0 - alpha)
    if hms > 0:
        split_bound += c_hms * hms * threshold ** (1.0 - beta) / (beta - 1.0)
    return {
        "j": int(j),
        "hs": hs,
        "hms": hms,
        "threshold": threshold,
        "budget": budget,
        "budget_below": low,
        "budget_above": high,
        "c_hs": c_hs,
        "c_hms": c_hms,
        "crossover": crossover,
        "crossover_over_threshold": crossover / threshold,
        "split_bound": split_bound,
        "plateau_hs": bool(_plateau(times, times**alpha * grad_linf, times[1] if len(times) > 1 else 0.0)),
        "plateau_hms": bool(_plateau(times, times**beta * grad_linf, times[1] if len(times) > 1 else 0.0)),
    }


def _grad_linf(grid: TorusGrid, coeffs: np.ndarray) -> float:
    grad = grid.ifft(np.stack([grid.ikx * coeffs, grid.iky * coeffs], axis=-3))
    return lebesgue_norm(grid, grad, np.inf)


def heat_dyadic_demo(grid: TorusGrid, u0, s: float = 0.5, times=None, mu: float = 1.0) -> dict:
    """Dynamic interpolation for the heat flow ``u_t = mu Laplacian(u)``.

    Parameters
    ----------
    grid : TorusGrid
    u0 : ndarray, shape (2, n, n)
        Band-limited initial velocity.
    s : float
        Interpolation exponent; the threshold is ``A_j = 2**(-j/s)``.
    times : ndarray, optional
        Quadrature nodes starting at 0 (default :func:`default_heat_times`).
    mu : float

    Returns
    -------
    dict
        ``atoms`` (per-atom summaries), ``assembled`` (sum of per-atom
        budgets), ``direct`` (budget of the unsplit flow), ``tally`` (the
        interpolation tally with unit density), ``b021``, the ratio
        ``assembled_over_tally`` and the flag ``direct_le_assembled``.
    """
    times = default_heat_times() if times is None else np.asarray(times, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    decomposition = atomic_decompose(grid, u0, np.ones((grid.n, grid.n)), s)
    u0_hat = grid.fft(u0)
    decays = [np.exp(-mu * grid.k2 * t) for t in times]
    direct_series = np.array([_grad_linf(grid, u0_hat * d) for d in decays])
    atoms = []
    for (j, atom), terms in zip(decomposition.atoms, decomposition.atom_norms):
        atom_hat = grid.fft(atom)
        series = np.array([_grad_linf(grid, atom_hat * d) for d in decays])
        atoms.append(_atom_summary(times, series, j, terms["hs"], terms["hms"], s))
    assembled = float(sum(a["budget"] for a in atoms))
    direct = float(trapezoid(direct_series, times))
    tally = decomposition.weight_tally
    return {
        "times": times,
        "atoms": atoms,
        "assembled": assembled,
        "direct": direct,
        "tally": tally,
        "b021": besov_b021_norm(grid, u0),
        "assembled_over_tally": assembled / tally if tally > 0 else 0.0,
        "split_bound": float(sum(a["split_bound"] for a in atoms)),
        "direct_le_assembled": bool(direct <= assembled * (1 + 1e-12) + _TINY),
        "mean": decomposition.mean,
    }


@dataclass
class AtomRun:
    """One dyadic atom evolved in the shared environment.

    Attributes
    ----------
    j : int
        Scale index.
    atom : ndarray, shape (2, n, n)
        Divergence-free initial atom.
    trajectory : Trajectory
        Linearized evolution (velocity snapshots only unless kept in full).
    hs, hms : float
        ``||u_0j||_{H^s}`` and ``||P(rho_0 u_0j)||_{H^{-s}}``.
    budget : float
        ``int ||grad u_j||_inf dt`` over the snapshot times.
    summary : dict
        Split integrals, measured constants, crossover and plateau flags.
    companions : dict
        Companion integrals of the Lipschitz budget (empty when disabled).
    """

    j: int
    atom: np.ndarray
    trajectory: Trajectory
    hs: float
    hms: float
    budget: float
    summary: dict = field(default_factory=dict)
    companions: dict = field(default_factory=dict)
    grad_linf: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _slim(traj: Trajectory) -> Trajectory:
    """Keep only velocities so that many atom runs fit in memory."""
    snaps = [FlowState(s.t, None, s.u, None, s.mu) for s in traj.snapshots]
    out = Trajectory(traj.grid, traj.mu, snaps, traj.diagnostics, traj.environment, traj.kind)
    out.step_times = getattr(traj, "step_times", None)
    return out


def _companions(traj: Trajectory) -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailNotConverged)
        return lipschitz_budget(decay_record(traj))


def _evolve(env, u0, T, options, companions, keep):
    traj = solve_linearized(env, u0, T, check_pair=False, **options)
    grid = env.grid
    times = traj.times
    series = np.array([lebesgue_norm(grid, _gradient(grid, s.u), np.inf) for s in traj.snapshots])
    extra = _companions(traj) if companions and len(traj.snapshots) >= 3 else {}
    return (traj if keep else _slim(traj)), times, series, extra


def _gradient(grid, u):
    coeffs = grid.fft(u)
    return grid.ifft(np.stack([grid.ikx * coeffs, grid.iky * coeffs], axis=-3))


def ins_dyadic(
    env: Environment,
    u0,
    T: float,
    rho0=None,
    s: float = 0.5,
    dt: float | None = None,
    step_times=None,
    output_times=None,
    mu: float = 1.0,
    threads: int = 1,
    companions: bool = True,
    check_pair: bool = True,
    pair_tol: float = 0.25,
    keep_trajectories: bool = False,
    **solver_options,
) -> dict:
    """Evolve every atom of ``u0`` in the environment and assemble the budgets.

    Parameters
    ----------
    env : Environment
        Shared density/velocity pair, typically recorded from a nonlinear run.
    u0 : ndarray, shape (2, n, n)
    T : float
    rho0 : ndarray, optional
        Density weighting the tally; defaults to the environment at ``t = 0``.
    s : float
    dt, step_times, output_times, mu, solver_options
        Forwarded to :func:`~inhomns.solver.solve_linearized`.
    threads : int
        Number of atom runs executed concurrently.
    companions : bool
        Also evaluate the companion integrals per atom and for the full run.
    keep_trajectories : bool
        Keep full snapshots (derivatives, pressure) in the returned runs.

    Returns
    -------
    dict
        ``runs`` (list of :class:`AtomRun`), ``full`` (the unsplit run),
        ``reassembly`` (relative residual per sampled time), ``reassembly_max``,
        per-atom sup ratios, assembled and direct budgets, tally ratios and
        the truncation residual of the decomposition.
    """
    grid = env.grid
    if check_pair:
        env.check_consistency(pair_tol)
    u0 = np.asarray(u0, dtype=float)
    if rho0 is None:
        rho0 = env.at(0.0)[0]
    decomposition = atomic_decompose(grid, u0, rho0, s)
    u0_norm = l2_norm(grid, u0)
    truncation = l2_norm(grid, u0 - decomposition.reconstruct(grid)) / max(u0_norm, _TINY)
    options = dict(dt=dt, step_times=step_times, output_times=output_times, mu=mu, **solver_options)

    jobs = [atom for _, atom in decomposition.atoms]
    has_mean = bool(np.any(decomposition.mean != 0))
    if has_mean:
        jobs.append(np.broadcast_to(decomposition.mean[:, None, None], u0.shape).copy())
    jobs.append(u0)

    def work(field):
        return _evolve(env, field, T, options, companions, keep_trajectories)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(f) for f in jobs]

    full_traj, times, full_series, full_companions = results[-1]
    runs = []
    alpha, beta = _bound_exponents(s)
    for (j, atom), terms, (traj, _, series, extra) in zip(
        decomposition.atoms, decomposition.atom_norms, results
    ):
        summary = _atom_summary(times, series, j, terms["hs"], terms["hms"], s)
        runs.append(
            AtomRun(j, atom, traj, terms["hs"], terms["hms"], summary["budget"], summary, extra, series)
        )
    mean_traj = results[len(runs)][0] if has_mean else None

    reassembly = np.zeros(len(times))
    for i in range(len(times)):
        total = sum(r.trajectory.snapshots[i].u for r in runs) if runs else np.zeros_like(u0)
        if mean_traj is not None:
            total = total + mean_traj.snapshots[i].u
        reassembly[i] = l2_norm(grid, total - full_traj.snapshots[i].u) / max(u0_norm, _TINY)

    assembled = float(sum(r.budget for r in runs))
    direct = float(trapezoid(full_series, times))
    tally = decomposition.weight_tally
    report = {
        "times": times,
        "runs": runs,
        "full": full_traj,
        "full_grad_linf": full_series,
        "reassembly": reassembly,
        "reassembly_max": float(reassembly.max()) if reassembly.size else 0.0,
        "truncation": truncation,
        "tally": tally,
        "assembled": assembled,
        "direct": direct,
        "assembled_over_tally": assembled / tally if tally > 0 else 0.0,
        "direct_over_tally": direct / tally if tally > 0 else 0.0,
        "direct_le_assembled": bool(direct <= assembled * (1 + 1e-12) + _TINY),
        "sup_ratio_hs": max((r.summary["c_hs"] for r in runs), default=0.0),
        "sup_ratio_hms": max((r.summary["c_hms"] for r in runs), default=0.0),
        "exponents": (alpha, beta),
        "weighted_means": [t["weighted_mean"] for t in decomposition.atom_norms],
    }
    if companions:
        keys = ("puniq", "l1l2", "l1l2b")
        report["companions_direct"] = {k: full_companions.get(k, 0.0) for k in keys}
        report["companions_assembled"] = {
            k: float(sum(r.companions.get(k, 0.0) for r in runs)) for k in keys
        }
    return report


def propagate_regularity(atom_runs, s: float = 0.5) -> dict:
    """Interpolation tally of the evolved atoms against the evolved density.

    ``tally(t) = sum_j 2^{-j/2} ||u_j(t)||_{H^s} + 2^{j/2} ||P(rho(t) u_j(t))||_{H^{-s}}``.

    Parameters
    ----------
    atom_runs : list of AtomRun
        Runs sharing one environment and one set of snapshot times.
    s : float

    Returns
    -------
    dict
        ``times``, ``tally`` series and ``sup_ratio = sup_t tally(t)/tally(0)``.
    """
    if atom_runs is None:
        raise MissingAtomRuns("propagate_regularity needs the atom runs of ins_dyadic")
    atom_runs = list(atom_runs)
    if not atom_runs:
        return {"times": np.zeros(0), "tally": np.zeros(0), "sup_ratio": 0.0}
    first = atom_runs[0].trajectory
    grid = first.grid
    env = first.environment
    if env is None:
        raise MissingAtomRuns("atom runs carry no environment")
    times = first.times
    tally = np.zeros(len(times))
    for i, t in enumerate(times):
        rho = env.at(float(t))[0]
        for run in atom_runs:
            u = run.trajectory.snapshots[i].u
            tally[i] += atom_tally_terms(grid, u, run.j, rho, s)["term"]
    sup_ratio = float(tally.max() / tally[0]) if tally[0] > 0 else 0.0
    return {"times": times, "tally": tally, "sup_ratio": sup_ratio}


def report_json(report: dict) -> dict:
    """JSON-ready per-atom table and assembled summary of a dyadic report."""
    atoms = []
    for entry in report.get("atoms", []) or [r.summary for r in report.get("runs", [])]:
        atoms.append({k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in entry.items()})
    if "runs" in report:
        for row, run in zip(atoms, report["runs"]):
            row.update({f"companion_{k}": float(v) for k, v in run.companions.items() if isinstance(v, float)})
    summary = {}
    for key, value in report.items():
        if isinstance(value, (bool, np.bool_)):
            summary[key] = bool(value)
        elif isinstance(value, (int, float, np.floating)) and not isinstance(value, bool):
            summary[key] = float(value)
        elif isinstance(value, dict) and key.startswith("companions"):
            summary[key] = {k: float(v) for k, v in value.items()}
    return {"atoms": atoms, "summary": summary}


__all__ = [
    "AtomRun",
    "default_heat_times",
    "heat_dyadic_demo",
    "ins_dyadic",
    "propagate_regularity",
    "report_json",
]
