"""End-to-end acceptance checks.

Each test appends one ``ACn PASS/FAIL: ...`` line to the terminal summary
and then asserts. The expensive runs are shared through module fixtures.
"""
import math
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from inhomns.decay import decay_record, lipschitz_budget, theorem1_suite
from inhomns.dyadic import heat_dyadic_demo, ins_dyadic
from inhomns.errors import TailNotConverged
from inhomns.initial import (
    density_patch,
    dyadic_band_velocity,
    random_band_scalar,
    random_band_velocity,
    single_mode,
    taylor_green,
)
from inhomns.lagrangian import (
    divergence_fixed_point,
    integrate_flow,
    lagrangian_residual,
    roundtrip_error,
    smallness_quantity,
    stability_compare,
    to_lagrangian,
)
from inhomns.norms import (
    atomic_decompose,
    check_gn,
    check_gn_grad_inf,
    check_gn_inf,
    check_ladyzhenskaya,
    l2_norm,
)
from inhomns.solver import (
    Environment,
    geometric_times,
    run,
    solve_backward,
    solve_linearized,
    step_schedule,
)
from inhomns.spectral import TorusGrid, gradient

pytestmark = pytest.mark.slow


def record(label: str, ok: bool, details: str) -> None:
    ACCEPTANCE_LINES.append(f"{label} {'PASS' if ok else 'FAIL'}: {details}")
    assert ok, details


def test_ac01_taylor_green_exact():
    g = TorusGrid(64)
    u0 = taylor_green(g)
    T = 1.0
    traj = run(g, 1.0, u0, T, 1e-3, output_times=np.linspace(0, T, 11))
    err = max(l2_norm(g, s.u - math.exp(-2 * s.t) * u0) for s in traj.snapshots)
    record("AC1", err < 1e-6, f"max L2 error vs exp(-2t) u0 = {err:.2e} (< 1e-6)")


@pytest.fixture(scope="module")
def energy_runs():
    g = TorusGrid(128)
    rho0 = density_patch(g, inner=3.0, outer=1.0)
    u0 = random_band_velocity(g, 1, 4, seed=7)
    return g, {dt: run(g, rho0, u0, 1.0, dt, output_times=[0.0, 1.0]) for dt in (1e-3, 5e-4)}


def test_ac02_energy_balance(energy_runs):
    _, runs = energy_runs
    coarse = runs[1e-3].energy_residual().max()
    fine = runs[5e-4].energy_residual().max()
    ratio = coarse / fine
    ok = coarse < 1e-3 and fine < 1e-3 and ratio >= 1.8
    record("AC2", ok, f"residual {coarse:.2e} (dt=1e-3), {fine:.2e} (dt=5e-4), ratio {ratio:.3f} (>= 1.8)")


def _momentum_drift(g, traj):
    d = traj.diagnostics
    m = np.stack([d["momentum_x"], d["momentum_y"]])
    snap = traj.snapshots[0]
    scale = float(g.integrate(snap.rho * np.hypot(*snap.u)))
    return float(np.hypot(*(m - m[:, :1])).max()) / scale


def test_ac03_conservation(energy_runs):
    g, runs = energy_runs
    coarse = runs[1e-3]
    d = coarse.diagnostics
    steps = len(d["time"]) - 1
    exact = bool(np.all(d["rho_min"] == 1.0) and np.all(d["rho_max"] == 3.0))
    drift = {dt: _momentum_drift(g, tr) for dt, tr in runs.items()}
    # both drifts sit at rounding level, where refinement cannot improve them further
    improving = drift[5e-4] <= drift[1e-3] or max(drift.values()) < 1e-11
    ok = steps >= 1000 and exact and max(drift.values()) < 1e-3 and improving
    record(
        "AC3",
        ok,
        f"{steps} steps, extrema exact={exact}, momentum drift {drift[1e-3]:.1e} (dt=1e-3), "
        f"{drift[5e-4]:.1e} (dt=5e-4)",
    )


def _theorem1(n, dt):
    g = TorusGrid(n)
    rho0 = density_patch(g, inner=3.0, outer=1.0, width=0.2)
    u0 = random_band_velocity(g, 1, 4, seed=7)
    traj = run(g, rho0, u0, 2.0, dt, output_times=geometric_times(0.01, 2.0, 1.1))
    return theorem1_suite(decay_record(traj))


def test_ac04_decay_ladder():
    coarse, fine = _theorem1(64, 2e-3), _theorem1(128, 1e-3)
    changes = {k: abs(fine["ratios"][k] / coarse["ratios"][k] - 1) for k in coarse["ratios"]}
    plateau = coarse["all_plateau"] and fine["all_plateau"]
    worst = max(changes, key=changes.get)
    ok = plateau and changes[worst] < 0.1
    record(
        "AC4",
        ok,
        f"{len(changes)} ratios, all plateau={plateau}, max refinement change {changes[worst]:.2%} ({worst})",
    )


def test_ac05_duality():
    g = TorusGrid(64)
    rho0 = density_patch(g, inner=3.0, outer=1.0, width=0.4)
    u0 = random_band_velocity(g, 1, 4, seed=7)
    T = 0.5
    traj = run(g, rho0, u0, T, 2e-3, output_times=[0.0, T], record_environment=True)
    env = traj.recorded_environment
    first, last = traj.snapshots[0], traj.snapshots[-1]
    errors = []
    for seed in range(5):
        w_T = random_band_velocity(g, 1, 6, seed=100 + seed)
        back = solve_backward(env, T, terminal=w_T, output_times=[0.0, T])
        w0, wT = back.snapshots[0].u, back.snapshots[-1].u
        lhs = g.inner(last.rho * last.u, wT)
        rhs = g.inner(first.rho * first.u, w0)
        errors.append(abs(lhs - rhs) / math.sqrt(g.inner(last.u, last.u) * g.inner(wT, wT)))
    worst = max(errors)
    record("AC5", worst < 1e-4, f"max normalized duality gap over 5 terminal data {worst:.1e} (< 1e-4)")


def test_ac06_reassembly():
    g = TorusGrid(128)
    rho0 = density_patch(g, inner=3.0, outer=1.0, width=0.4)
    u0 = dyadic_band_velocity(g, 1, 3, seed=5)
    T = 0.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailNotConverged)
        res = ins_dyadic(Environment.frozen(g, rho0), u0, T, dt=2e-3,
                         output_times=geometric_times(1e-2, T, 1.2), threads=4, companions=False)
    octaves = [r.j for r in res["runs"]]
    rel = res["reassembly_max"] / l2_norm(g, u0)
    ok = len(octaves) == 3 and rel < 1e-6
    record("AC6", ok, f"atoms j={octaves}, max reassembly error {rel:.1e} x ||u0|| (< 1e-6)")


def test_ac07_heat_interpolation():
    g = TorusGrid(64)
    u0 = dyadic_band_velocity(g, 0, 4, seed=3)
    base, scaled = heat_dyadic_demo(g, u0), heat_dyadic_demo(g, 10 * u0)
    factors = [a["crossover_over_threshold"] for a in base["atoms"]]
    within = all(0.25 <= f <= 4 for f in factors)
    triangle = base["direct"] <= base["assembled"]
    drift = abs(scaled["assembled_over_tally"] / base["assembled_over_tally"] - 1)
    ok = within and triangle and drift < 1e-10
    record(
        "AC7",
        ok,
        f"crossover/threshold in [{min(factors):.2f}, {max(factors):.2f}], "
        f"direct {base['direct']:.4f} <= assembled {base['assembled']:.4f}, amplitude drift {drift:.1e}",
    )


def _budget_ratios(n):
    g = TorusGrid(n)
    T = 20.0
    rho0 = density_patch(g, inner=3.0, outer=1.0, width=0.4)
    steps = step_schedule(T, 2e-3 * 64 / n, growth=1.01, dt_max=0.05, grow_after=0.2)
    env = run(g, rho0, random_band_velocity(g, 1, 4, seed=11), T, None, output_times=[0.0, T],
              step_times=steps, record_environment=True).recorded_environment
    out = geometric_times(1e-3, T, 1.05)
    tallies, ratios = [], []
    for seed, target in zip(range(1, 6), np.geomspace(1, 10, 5)):
        # the tally is positively homogeneous, so rescaling pins it to the target
        u0 = random_band_velocity(g, 2, 8, seed)
        u0 *= target / atomic_decompose(g, u0, rho0).weight_tally
        tally = atomic_decompose(g, u0, rho0).weight_tally
        lin = solve_linearized(env, u0, T, output_times=out)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TailNotConverged)
            budget = lipschitz_budget(lin, tally=tally)
        tallies.append(tally)
        ratios.append(budget["budget_over_tally"])
    return np.array(tallies), np.array(ratios)


def test_ac08_lipschitz_budget():
    tallies, ratios = _budget_ratios(64)
    _, half = _budget_ratios(32)
    span = tallies.max() / tallies.min()
    band = ratios.max() / ratios.min()
    change = np.abs(ratios / half - 1).max()
    ok = span >= 10 * (1 - 1e-9) and band < 3 and change < 0.1
    record(
        "AC8",
        ok,
        f"tally span {span:.1f}, ratios {ratios.min():.4f}..{ratios.max():.4f} (band {band:.2f} < 3), "
        f"n=32 vs n=64 change {change:.1%} (< 10%)",
    )


INEQUALITIES = {
    "ladyzhenskaya": check_ladyzhenskaya,
    "gn_l4": lambda g, z: check_gn(g, z, 4),
    "gn_l6": lambda g, z: check_gn(g, z, 6),
    "gn_inf": check_gn_inf,
    "gn_grad_inf": check_gn_grad_inf,
}


def test_ac09_inequalities():
    sups = {}
    for n in (64, 128):
        g = TorusGrid(n)
        best = dict.fromkeys(INEQUALITIES, 0.0)
        for seed in range(1000):
            field = random_band_scalar(g, 1, 4, seed)
            for name, check in INEQUALITIES.items():
                value = check(g, field)
                assert math.isfinite(value)
                best[name] = max(best[name], value)
        sups[n] = best
    change = {k: abs(sups[128][k] / sups[64][k] - 1) for k in INEQUALITIES}
    g = TorusGrid(64)
    closed = abs(check_gn_grad_inf(g, np.sin(g.X)) - (1.5 * math.pi**2) ** -0.25)
    worst = max(change, key=change.get)
    ok = change[worst] < 0.05 and closed < 1e-6
    record("AC9", ok, f"max n->2n change {change[worst]:.2%} ({worst}), sin x closed form error {closed:.1e}")


def _lagrangian_residual(n, dt, spacing, T=1.0):
    g = TorusGrid(n)
    traj = run(g, 1.0, taylor_green(g), T, dt, output_times=np.arange(0, T + 1e-9, spacing))
    flow = integrate_flow(traj)
    res = lagrangian_residual(1.0, to_lagrangian(traj, flow), flow)
    return traj, flow, float(res["relative"].max())


def test_ac10_lagrangian():
    traj, flow, resid = _lagrangian_residual(128, 1e-3, 0.01)
    det_err = flow.volume_error()
    trip = roundtrip_error(traj, flow)
    coarse = _lagrangian_residual(64, 2e-3, 0.02)[2]
    fine = _lagrangian_residual(64, 1e-3, 0.01)[2]
    halving = coarse / fine
    g = TorusGrid(32)
    rho0 = density_patch(g, width=0.4)
    u0 = random_band_velocity(g, 1, 3, seed=3)
    out = np.linspace(0, 0.2, 21)
    base = run(g, rho0, u0, 0.2, 5e-3, output_times=out)
    f_base = integrate_flow(base)
    holds = []
    for eps in (1e-2, 1e-3):
        other = run(g, rho0, u0 + eps * single_mode(g, (1, 1)), 0.2, 5e-3, output_times=out)
        holds.append(stability_compare(base, other, flow1=f_base, flow2=integrate_flow(other)).lagrangian["dA_holds"])
    ok = det_err < 1e-6 and trip < 1e-4 and resid < 1e-3 and halving >= 1.8 and all(holds)
    record(
        "AC10",
        ok,
        f"det error {det_err:.1e}, roundtrip {trip:.1e}, residual {resid:.1e}, "
        f"refinement ratio {halving:.2f}, dA holds on {sum(holds)}/{len(holds)} pairs",
    )


def test_ac11_stability():
    g = TorusGrid(32)
    u0 = random_band_velocity(g, 1, 3, seed=1)
    out = np.linspace(0, 0.5, 26)
    base = run(g, 1.0, u0, 0.5, 5e-3, output_times=out)
    f_base = integrate_flow(base)
    same = stability_compare(base, base, flow1=f_base, flow2=f_base)
    zero = same.stabu_ratio == 0.0 and all(v == 0.0 for v in same.stabrho_ratio.values())
    ratios, holds = [], []
    for eps in (1e-2, 1e-3, 1e-4):
        other = run(g, 1.0, u0 + eps * single_mode(g, (1, 1)), 0.5, 5e-3, output_times=out)
        rep = stability_compare(base, other, flow1=f_base, flow2=integrate_flow(other))
        ratios.append(rep.stabu_ratio)
        holds.append(rep.lagrangian["dA_holds"])
    variation = max(ratios) / min(ratios) - 1

    env = run(g, 1.0, 0.02 * np.stack([np.sin(g.Y), np.zeros_like(g.X)]), 0.5, 5e-3, output_times=out)
    small = smallness_quantity(env)
    k = np.array([random_band_velocity(g, 1, 4, seed=2) + np.stack(gradient(g, random_band_scalar(g, 1, 4, seed=3)))
                  for _ in out])
    k -= k.mean(axis=(-2, -1), keepdims=True)
    fixed = divergence_fixed_point(integrate_flow(env), k, smallness=small)
    geometric = bool(np.all(np.asarray(fixed.factors) < 1))
    ok = zero and variation < 0.2 and all(holds) and small < 0.1 and geometric and fixed.divergence_error < 1e-7
    record(
        "AC11",
        ok,
        f"identical runs zero={zero}, stabu ratio variation {variation:.1e} over eps 1e-2..1e-4, "
        f"smallness {small:.3f}, {fixed.iterations} iterations with factors <= {max(fixed.factors):.1e}, "
        f"div error {fixed.divergence_error:.1e}",
    )


def _scaling_error(r1, v1, g1, T, dt, lam=2):
    g2 = TorusGrid(lam * g1.n)
    r1 = np.broadcast_to(r1, (g1.n, g1.n))
    out = np.linspace(0, T, 6)
    a = run(g1, r1, v1, T, dt, output_times=out)
    b = run(g2, np.tile(r1, (lam, lam)), lam * np.tile(v1, (1, lam, lam)), T / lam**2, dt / lam**2,
            output_times=out / lam**2)
    return max(
        abs(lam * l2_norm(g1, sa.u) - l2_norm(g2, sb.u)) / l2_norm(g2, sb.u)
        for sa, sb in zip(a.snapshots, b.snapshots)
    )


def test_ac12_scaling():
    g = TorusGrid(32)
    tg = _scaling_error(np.ones((32, 32)), taylor_green(g), g, 0.5, 2e-3)
    patch = _scaling_error(density_patch(g, inner=3, outer=1, width=0.4), random_band_velocity(g, 1, 3, seed=2),
                           g, 0.25, 2e-3)
    ok = tg < 1e-3 and patch < 1e-3
    record("AC12", ok, f"lambda=2 rescaled norm error {tg:.1e} (Taylor-Green), {patch:.1e} (density patch)")

