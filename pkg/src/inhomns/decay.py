"""Time-weighted decay diagnostics of a trajectory.

Every "bounded by a constant" statement is turned into a measured
dimensionless quantity: a supremum over time of a weighted norm divided by a
norm of the data, or a time integral divided by a data norm. The suites also
report whether the running supremum has stopped growing (plateau), which is
what makes the measured value a witness of the bound.

Time integrals use the trapezoid rule on the snapshot times; weights that
vanish at ``t = 0`` make the initial snapshot contribute zero.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import (
    InsufficientSnapshots,
    InvalidExponents,
    MissingDiagnostics,
    MomentumNotZero,
    TailNotConverged,
)
from .norms import lebesgue_norm, sobolev_norm_hat
from .solver import Trajectory
from .spectral import gradient_hat, leray_hat

THEOREM1_QUANTITIES = (
    ("u", 0.0, "u_l2"),
    ("grad_u", 0.5, "grad_u_l2"),
    ("hess_u", 1.0, "hess_u_l2"),
    ("u_t", 1.0, "ut_l2"),
    ("grad_u_t", 1.5, "grad_ut_l2"),
    ("u_dot", 1.0, "udot_l2"),
    ("grad_u_dot", 1.5, "grad_udot_l2"),
    ("grad_p", 1.0, "gradp_l2"),
)


@dataclass
class DecayRecord:
    """Per-snapshot norms, cumulative integrals and weighted functionals.

    Attributes
    ----------
    times : ndarray
    columns : dict of str to ndarray
        One entry per monitored quantity, aligned with ``times``.
    data : dict
        Norms of the initial data (``u0_l2``, ``sqrt_rho0_u0_l2`` and the
        negative Sobolev norms of the initial momentum).
    params : dict
        ``mu``, ``s``, ``q_values``, ``c_omega``, ``rho_upper``, ``rho_lower``.
    """

    times: np.ndarray
    columns: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __getitem__(self, key):
        try:
            return self.columns[key]
        except KeyError as exc:
            raise MissingDiagnostics(f"decay record has no column {key!r}") from exc


def _l2sq(grid, f):
    return float(np.sum(f * f)) * grid.quadrature_weight


def _qname(q):
    return "inf" if math.isinf(q) else f"{q:g}"


def _hessian_hat(grid, coeffs):
    """Second derivatives of a (stack of) fields as ``(..., 2, 2, n, n//2+1)``."""
    xx = -(grid.kx**2) * coeffs
    yy = -(grid.ky**2) * coeffs
    xy = grid.ikx * grid.iky * coeffs
    return np.stack([np.stack([xx, xy], axis=-3), np.stack([xy, yy], axis=-3)], axis=-4)


def _grad_hat(grid, coeffs):
    return np.stack([grid.ikx * coeffs, grid.iky * coeffs], axis=-3)


def _dealiased_dot(grid, v, grad):
    """``M(v_j grad_j f)`` for ``grad`` of shape (..., 2, n, n)."""
    prod = v[0] * grad[..., 0, :, :] + v[1] * grad[..., 1, :, :]
    return grid.ifft(grid.fft(prod) * grid.dealias_mask)


def decay_record(
    traj: Trajectory,
    q_values=(4.0,),
    s: float = 0.5,
    c_omega: float = 1.0,
) -> DecayRecord:
    """Evaluate all monitored quantities on every snapshot of ``traj``.

    Requires snapshots carrying ``u_t`` (the solver attaches it); ``u_tt`` is
    used for the third weighted functional and treated as zero when absent.
    """
    snaps = traj.snapshots
    if len(snaps) < 3:
        raise InsufficientSnapshots("decay diagnostics need at least three snapshots")
    grid = traj.grid
    mu = traj.mu
    # L^4 columns are always needed by the companion integrals
    q_values = tuple(sorted({float(q) for q in q_values} | {4.0}))
    times = traj.times
    cols: dict[str, list] = {}

    def put(key, value):
        cols.setdefault(key, []).append(float(value))

    rho0 = snaps[0].rho
    rho_upper = float(rho0.max())
    rho_lower = float(rho0.min())

    for i, snap in enumerate(snaps):
        t = snap.t
        rho, u = snap.rho, snap.u
        if snap.u_t is None:
            raise MissingDiagnostics(f"snapshot at t={t} has no time derivative")
        u_t = snap.u_t
        u_tt = snap.u_tt if snap.u_tt is not None else np.zeros_like(u)
        v = traj.transport_velocity(i)
        v_t = traj.transport_velocity_rate(i)
        grad_p = snap.grad_p

        u_hat = grid.fft(u)
        grad_u_hat = _grad_hat(grid, u_hat)  # (2 comp, 2 deriv, ...)
        grad_u = grid.ifft(grad_u_hat)
        hess_u_hat = _hessian_hat(grid, u_hat)
        hess_u = grid.ifft(hess_u_hat)
        lap_u = hess_u[:, 0, 0] + hess_u[:, 1, 1]
        ut_hat = grid.fft(u_t)
        grad_ut = grid.ifft(_grad_hat(grid, ut_hat))

        conv = _dealiased_dot(grid, v, grad_u)
        u_dot = u_t + conv
        udot_hat = grid.fft(u_dot)
        grad_udot = grid.ifft(_grad_hat(grid, udot_hat))
        hess_udot = grid.ifft(_hessian_hat(grid, udot_hat))
        lap_udot = hess_udot[:, 0, 0] + hess_udot[:, 1, 1]

        # second convective derivative and the pressure time derivative
        u_ddot = (
            u_tt
            + _dealiased_dot(grid, v_t, grad_u)
            + _dealiased_dot(grid, v, grad_ut)
            + _dealiased_dot(grid, v, grad_udot)
        )
        v_hat = grid.fft(v)
        grad_v = grid.ifft(_grad_hat(grid, v_hat))  # grad_v[j, k] = d_k v_j
        hess_v = grid.ifft(_hessian_hat(grid, v_hat))
        lap_v = hess_v[:, 0, 0] + hess_v[:, 1, 1]
        # F = grad v . grad P - lap v . grad u - 2 hess u . grad v
        term1 = np.stack([grad_v[0, i_] * grad_p[0] + grad_v[1, i_] * grad_p[1] for i_ in range(2)])
        term2 = np.stack([lap_v[0] * grad_u[i_, 0] + lap_v[1] * grad_u[i_, 1] for i_ in range(2)])
        term3 = np.stack(
            [
                sum(grad_v[j, k] * hess_u[i_, j, k] for j in range(2) for k in range(2))
                for i_ in range(2)
            ]
        )
        forcing = term1 - term2 - 2.0 * term3
        grad_pdot = grid.ifft(gradient_hat(grid, grid.fft(forcing - rho * u_ddot + lap_udot)))

        put("u_l2", math.sqrt(_l2sq(grid, u)))
        put("grad_u_l2", math.sqrt(_l2sq(grid, grad_u)))
        put("hess_u_l2", math.sqrt(_l2sq(grid, hess_u)))
        put("ut_l2", math.sqrt(_l2sq(grid, u_t)))
        put("grad_ut_l2", math.sqrt(_l2sq(grid, grad_ut)))
        put("udot_l2", math.sqrt(_l2sq(grid, u_dot)))
        put("grad_udot_l2", math.sqrt(_l2sq(grid, grad_udot)))
        put("gradp_l2", math.sqrt(_l2sq(grid, grad_p)))
        put("grad_u_linf", lebesgue_norm(grid, grad_u, math.inf))
        put("energy", _l2sq(grid, np.sqrt(rho) * u))
        put("sqrt_rho_ut_sq", _l2sq(grid, np.sqrt(rho) * u_t))
        put("sqrt_rho_udot_sq", _l2sq(grid, np.sqrt(rho) * u_dot))
        put("sqrt_rho_uddot_sq", _l2sq(grid, np.sqrt(rho) * u_ddot))
        put("grad_pdot_l2", math.sqrt(_l2sq(grid, grad_pdot)))
        put("hess_udot_l2", math.sqrt(_l2sq(grid, hess_udot)))
        put("hess_u_l4", lebesgue_norm(grid, hess_u, 4))
        put("gradp_l4", lebesgue_norm(grid, grad_p, 4))
        stokes_res = leray_hat(grid, grid.fft(rho * u_dot - mu * lap_u))
        put("stokes_residual", math.sqrt(grid.spectral_norm2(stokes_res)))

        mom_hat = grid.fft(rho * u)
        proj_mom = leray_hat(grid, mom_hat)
        put(f"Pu_hm{_qname(s)}", sobolev_norm_hat(grid, proj_mom, -s))
        put("Pu_hm1", sobolev_norm_hat(grid, proj_mom, -1.0))
        put("rho_u_hm1", sobolev_norm_hat(grid, mom_hat, -1.0))

        for q in q_values:
            qn = _qname(q)
            if q != 2.0:
                # the q = 2 columns coincide with the L^2 columns above
                put(f"u_l{qn}", lebesgue_norm(grid, u, q))
                put(f"grad_u_l{qn}", lebesgue_norm(grid, grad_u, q))
                put(f"ut_l{qn}", lebesgue_norm(grid, u_t, q))
                put(f"udot_l{qn}", lebesgue_norm(grid, u_dot, q))
            mix = np.sqrt(
                np.sum(u_dot**2, axis=0)
                + np.sum(u_t**2, axis=0)
                + np.sum(hess_u**2, axis=(0, 1, 2))
                + np.sum(grad_p**2, axis=0)
            )
            put(f"second_l{qn}", lebesgue_norm(grid, mix, q))
            put(
                f"hess_gradp_l{qn}",
                lebesgue_norm(
                    grid, np.sqrt(np.sum(hess_u**2, axis=(0, 1, 2)) + np.sum(grad_p**2, axis=0)), q
                ),
            )
            put(f"udot_ut_l{qn}", lebesgue_norm(grid, np.sqrt(np.sum(u_dot**2 + u_t**2, axis=0)), q))
            if q != 2.0:
                put(f"grad_udot_l{qn}", lebesgue_norm(grid, grad_udot, q))
            put(f"sqrt_t_grad_u_l{qn}", math.sqrt(t) * lebesgue_norm(grid, grad_u, q))

        # environment norms entering the exponents
        put("rho_v4", float(np.sum(rho**2 * np.sum(v**2, axis=0) ** 2)) * grid.quadrature_weight)
        put("v_l4", lebesgue_norm(grid, v, 4))
        put("v_l6", lebesgue_norm(grid, v, 6))
        put("grad_v_l4", lebesgue_norm(grid, grad_v, 4))
        put("grad_v_l6", lebesgue_norm(grid, grad_v, 6))
        put("hess_v_l4", lebesgue_norm(grid, hess_v, 4))
        put("sqrt_rho_vt_sq", _l2sq(grid, np.sqrt(rho) * v_t))
        put("vt_l2", math.sqrt(_l2sq(grid, v_t)))
        put("vt_l4", lebesgue_norm(grid, v_t, 4))

    columns = {k: np.array(v) for k, v in cols.items()}
    t = times

    def cumint(y):
        return cumulative_trapezoid(y, t, initial=0.0)

    # cumulative integrals listed with the record
    columns["int_grad_u_sq"] = cumint(columns["grad_u_l2"] ** 2)
    columns["int_grad_u_linf"] = cumint(columns["grad_u_linf"])
    columns["int_udot_l2"] = cumint(columns["udot_l2"])
    columns["int_t23_udot_l4"] = cumint(t ** (2.0 / 3.0) * columns["udot_l4"] ** (4.0 / 3.0)) ** 0.75

    # weighted functionals
    c_ratio = c_omega / rho_upper
    hp2 = columns["hess_u_l2"] ** 2 + columns["gradp_l2"] ** 2
    columns["X1"] = (
        columns["energy"]
        + 2.0 * t * columns["grad_u_l2"] ** 2
        + 0.5 * cumint(t * (columns["sqrt_rho_udot_sq"] + columns["sqrt_rho_ut_sq"] + c_ratio * hp2))
    )
    columns["X2"] = (
        columns["energy"]
        + t * columns["grad_u_l2"] ** 2
        + 0.25 * t**2 * columns["sqrt_rho_ut_sq"]
        + t**2 * columns["sqrt_rho_udot_sq"] / 16.0
        + c_ratio * t**2 * hp2
        + cumint(
            columns["grad_u_l2"] ** 2
            + t * columns["sqrt_rho_udot_sq"]
            + t**2 * columns["grad_ut_l2"] ** 2
            + t**2 * columns["grad_udot_l2"] ** 2
        )
        / 16.0
    )
    columns["X3"] = t**3 * columns["grad_udot_l2"] ** 2 + cumint(
        t**3
        * (
            columns["sqrt_rho_uddot_sq"]
            + columns["grad_pdot_l2"] ** 2
            + columns["hess_udot_l2"] ** 2
        )
    )
    columns["C1"] = rho_upper * cumint(columns["rho_v4"])
    columns["C2"] = np.maximum.accumulate(t * columns["v_l4"] ** 4) + cumint(
        columns["rho_v4"] + t**2 * columns["grad_v_l4"] ** 4 + t * columns["sqrt_rho_vt_sq"]
    )
    v4 = columns["v_l4"] ** 4
    columns["C3"] = cumint(
        v4
        + (1.0 + t * v4) * columns["v_l6"] ** 3
        + t * columns["v_l6"] ** 6
        + t**1.5 * columns["grad_v_l6"] ** 3
        + t * columns["vt_l2"] ** 2
        + t**2 * columns["grad_v_l4"] ** 4
        + t**4 * columns["hess_v_l4"] ** 4
        + t**4 * columns["vt_l4"] ** 4
    )

    data = {
        "u0_l2": columns["u_l2"][0],
        "sqrt_rho0_u0_l2": math.sqrt(columns["energy"][0]),
        f"Pu0_hm{_qname(s)}": columns[f"Pu_hm{_qname(s)}"][0],
        "Pu0_hm1": columns["Pu_hm1"][0],
        "rho0_u0_hm1": columns["rho_u_hm1"][0],
        "momentum0": [float(x) for x in grid.integrate(snaps[0].rho * snaps[0].u)],
    }
    params = {
        "mu": mu,
        "s": s,
        "q_values": list(q_values),
        "c_omega": c_omega,
        "rho_upper": rho_upper,
        "rho_lower": rho_lower,
    }
    return DecayRecord(times=np.asarray(t), columns=columns, data=data, params=params)


def _as_record(obj, **kwargs) -> DecayRecord:
    return obj if isinstance(obj, DecayRecord) else decay_record(obj, **kwargs)


def _plateau(times, weighted, t_first, fraction=0.25, rel_tol=1e-3) -> bool:
    """Running supremum stops growing over the last ``fraction`` of ``[t_first, T]``."""
    T = times[-1]
    t_cut = T - fraction * (T - t_first)
    before = weighted[times <= t_cut]
    if before.size == 0:
        return False
    sup_before = before.max()
    sup_all = weighted.max()
    if sup_all == 0:
        return True
    return (sup_all - sup_before) <= rel_tol * sup_all


def theorem1_suite(traj_or_record, min_snapshots: int = 20, **kwargs) -> dict:
    """Measured suprema of ``(mu t)^w ||quantity||_2 / ||u0||_2`` for the eight
    bounded quantities (``u``, ``grad u``, ``hess u``, ``u_t``, ``grad u_t``,
    ``u_dot``, ``grad u_dot``, ``grad P``), with plateau flags.
    """
    rec = _as_record(traj_or_record, **kwargs)
    times = rec.times
    positive = times[times > 0]
    if positive.size < min_snapshots:
        raise InsufficientSnapshots(f"need {min_snapshots} positive snapshot times, got {positive.size}")
    t_first = positive[0]
    mu = rec.params["mu"]
    norm0 = rec.data["u0_l2"]
    out = {"ratios": {}, "plateau": {}, "argmax": {}, "t_first": float(t_first), "T": float(times[-1])}
    for name, power, col in THEOREM1_QUANTITIES:
        weighted = (mu * times) ** power * rec[col]
        if norm0 == 0:
            ratio = np.zeros_like(weighted)
        else:
            ratio = weighted / norm0
        out["ratios"][name] = float(ratio.max())
        out["argmax"][name] = float(times[int(np.argmax(ratio))])
        out["plateau"][name] = bool(_plateau(times, ratio, t_first))
    out["all_plateau"] = all(out["plateau"].values())
    return out


def weighted_functionals(traj_or_record, **kwargs) -> dict:
    """Weighted functionals with their measured exponents and quotients.

    For each ``i`` the quotient ``X_i / (data * exp(E_i))`` uses unit
    constants, and ``empirical_constant`` is the smallest ``C`` with
    ``X_i <= data * exp(C E_i)`` on the sampled times (0 if ``X_i <= data``).
    """
    rec = _as_record(traj_or_record, **kwargs)
    datas = {
        "X1": rec.data["sqrt_rho0_u0_l2"] ** 2,
        "X2": rec.data["u0_l2"] ** 2,
        "X3": rec.data["u0_l2"] ** 2,
    }
    out = {"times": rec.times}
    for i in (1, 2, 3):
        x = rec[f"X{i}"]
        e = rec[f"C{i}"]
        data = datas[f"X{i}"]
        entry = {"values": x, "exponent": e}
        if data == 0:
            entry.update(sup_over_data=0.0, quotient_unit=np.zeros_like(x), empirical_constant=0.0)
        else:
            entry["sup_over_data"] = float(np.max(x / data))
            entry["quotient_unit"] = x / (data * np.exp(e))
            excess = np.log(np.maximum(x / data, 1e-300))
            with np.errstate(divide="ignore", invalid="ignore"):
                needed = np.where(excess > 0, excess / np.where(e > 0, e, np.nan), 0.0)
            needed = needed[np.isfinite(needed)]
            entry["empirical_constant"] = float(needed.max()) if needed.size else math.inf
        out[f"X{i}"] = entry
    return out


def lebesgue_decay_suite(traj_or_record, pairs, **kwargs) -> dict:
    """Suprema of the two Lebesgue decay families for each ``(p, q)``.

    Family 1: ``t^{1/p-1/q} (||u||_q + ||sqrt(t) grad u||_q) / ||u0||_p``.
    Family 2: ``t^{1+1/p-1/q} ||(u_dot, u_t, hess u, grad P)||_q / ||u0||_p``.
    """
    pairs = [(float(p), float(q)) for p, q in pairs]
    for p, q in pairs:
        if not (1 < p <= 2 <= q):
            raise InvalidExponents(f"need 1 < p <= 2 <= q, got ({p}, {q})")
    qs = sorted({q for _, q in pairs})
    rec = _as_record(traj_or_record, q_values=qs, **kwargs)
    traj = traj_or_record if isinstance(traj_or_record, Trajectory) else None
    times = rec.times
    out = {}
    for p, q in pairs:
        qn = _qname(q)
        if f"u_l{qn}" not in rec.columns:
            raise MissingDiagnostics(f"record lacks L^{qn} columns")
        if traj is not None:
            u0_p = lebesgue_norm(traj.grid, traj.snapshots[0].u, p)
        else:
            u0_p = rec.data.get(f"u0_l{p:g}")
            if u0_p is None:
                raise MissingDiagnostics(f"record lacks ||u0||_{p:g}")
        if u0_p == 0:
            out[(p, q)] = {"family1": 0.0, "family2": 0.0 if math.isfinite(q) else None}
            continue
        e = 1.0 / p - (0.0 if math.isinf(q) else 1.0 / q)
        fam1 = times**e * (rec[f"u_l{qn}"] + rec[f"sqrt_t_grad_u_l{qn}"]) / u0_p
        entry = {"family1": float(fam1.max())}
        if math.isfinite(q):
            fam2 = times ** (1.0 + e) * rec[f"second_l{qn}"] / u0_p
            entry["family2"] = float(fam2.max())
        out[(p, q)] = entry
    return out


def l2time_decay_suite(traj_or_record, q_values, **kwargs) -> dict:
    """Time-L2 norms of weighted spatial ``L^q`` norms divided by ``||u0||_2``."""
    q_values = [float(q) for q in q_values]
    for q in q_values:
        if q < 2:
            raise InvalidExponents(f"q must be >= 2, got {q}")
    rec = _as_record(traj_or_record, q_values=[q for q in q_values if math.isfinite(q)] or (4.0,), **kwargs)
    times = rec.times
    norm0 = rec.data["u0_l2"]
    out = {}
    for q in q_values:
        qn = _qname(q)
        inv = 0.0 if math.isinf(q) else 1.0 / q
        if f"grad_u_l{qn}" not in rec.columns:
            raise MissingDiagnostics(f"record lacks L^{qn} columns")

        def l2t(y):
            return math.sqrt(float(trapezoid(y**2, times))) / norm0 if norm0 else 0.0

        entry = {
            "grad_u": l2t(times ** (0.5 - inv) * rec[f"grad_u_l{qn}"]),
            "udot_ut": l2t(times ** (1.0 - inv) * rec[f"udot_ut_l{qn}"]),
        }
        if math.isfinite(q):
            entry["hess_gradp"] = l2t(times ** (1.0 - inv) * rec[f"hess_gradp_l{qn}"])
            entry["grad_udot"] = l2t(times ** (1.5 - inv) * rec[f"grad_udot_l{qn}"])
        out[q] = entry
    return out


def negative_sobolev_monitor(traj_or_record, s: float = 0.5, momentum_tol: float = 1e-8, **kwargs) -> dict:
    """``||P(rho u)(t)||_{H^{-s}}`` against its data-side bound.

    The exponent ``(s/2) rho_upper int ||sqrt(rho) v||_4^4`` uses unit constants
    (``s = 1`` gives the exact form for the negative first-order norm).
    Also reports the space-time ``L^2`` norm of ``sqrt(rho) u`` against
    ``||rho0 u0||_{H^{-1}}``.
    """
    kwargs.setdefault("s", s)
    rec = _as_record(traj_or_record, **kwargs)
    mom = np.asarray(rec.data["momentum0"])
    scale = rec.data["sqrt_rho0_u0_l2"] * math.sqrt(rec.params["rho_upper"])
    if np.linalg.norm(mom) > momentum_tol * max(scale, 1e-300):
        raise MomentumNotZero(f"initial momentum {mom} is not zero")
    key = f"Pu_hm{_qname(s)}" if s != 1 else "Pu_hm1"
    series = rec[key]
    times = rec.times
    exponent = 0.5 * s * rec.params["rho_upper"] * cumulative_trapezoid(rec["rho_v4"], times, initial=0.0)
    data = series[0]
    ratio = series / (data * np.exp(exponent)) if data > 0 else np.zeros_like(series)
    l2l2 = math.sqrt(float(trapezoid(rec["energy"], times)))
    e1 = 0.5 * rec.params["rho_upper"] * float(trapezoid(rec["rho_v4"], times))
    rho_u_hm1 = rec.data["rho0_u0_hm1"]
    return {
        "times": times,
        "series": series,
        "sup_ratio": float(ratio.max()) if ratio.size else 0.0,
        "l2l2": l2l2,
        "l2l2_ratio": l2l2 / (rho_u_hm1 * math.exp(e1)) if rho_u_hm1 > 0 else 0.0,
        "monotone": bool(np.all(np.diff(series) <= 1e-12 * max(data, 1e-300))),
    }


def lipschitz_budget(traj_or_record, tally: float | None = None, tail_fraction: float = 0.05, **kwargs) -> dict:
    """Lipschitz budget and companion integrals, optionally divided by a tally.

    The tail check compares the increment over the last decade of time
    ``[T/10, T]`` with the total; exceeding ``tail_fraction`` emits a
    :class:`TailNotConverged` warning and sets ``tail_converged`` to False.
    """
    rec = _as_record(traj_or_record, **kwargs)
    t = rec.times
    budget = float(trapezoid(rec["grad_u_linf"], t))
    puniq_integrand = (
        np.sqrt(t)
        * np.sqrt(rec["udot_l4"] ** 2 + rec["hess_u_l4"] ** 2 + rec["gradp_l4"] ** 2)
    ) ** (4.0 / 3.0)
    puniq = float(trapezoid(puniq_integrand, t)) ** 0.75
    l1l2 = float(
        trapezoid(np.sqrt(rec["hess_u_l2"] ** 2 + rec["gradp_l2"] ** 2 + rec["udot_l2"] ** 2), t)
    )
    l1l2b = float(trapezoid(np.sqrt(t) * rec["grad_udot_l2"], t))
    cum = cumulative_trapezoid(rec["grad_u_linf"], t, initial=0.0)
    T = t[-1]
    tail = float(cum[-1] - np.interp(T / 10.0, t, cum))
    converged = budget == 0 or tail <= tail_fraction * budget
    if not converged:
        warnings.warn(
            f"Lipschitz budget tail {tail / budget:.3g} of total over [T/10, T]",
            TailNotConverged,
            stacklevel=2,
        )
    out = {
        "budget": budget,
        "puniq": puniq,
        "l1l2": l1l2,
        "l1l2b": l1l2b,
        "tail_fraction": tail / budget if budget > 0 else 0.0,
        "tail_converged": bool(converged),
    }
    if tally is not None:
        for key in ("budget", "puniq", "l1l2", "l1l2b"):
            out[f"{key}_over_tally"] = out[key] / tally if tally > 0 else 0.0
    return out
