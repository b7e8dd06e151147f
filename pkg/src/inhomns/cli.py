"""Command-line runner: ``inhomns run | verify | report | sweep``.

Exit status: 0 when every enabled check passes, 1 when a check fails, 2 for
invalid input (bad configuration, incompatible runs, missing diagnostics).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import config as config_mod
from .decay import THEOREM1_QUANTITIES, decay_record, lipschitz_budget, theorem1_suite, weighted_functionals
from .dyadic import heat_dyadic_demo, ins_dyadic
from .errors import ConfigError, InhomnsError, MissingDiagnostics, TailNotConverged
from .io import (
    decay_from_files,
    decay_to_csv,
    decay_to_json,
    dumps_json,
    load_trajectory,
    read_json,
    save_flow,
    save_trajectory,
    write_csv,
    write_json,
)
from .lagrangian import integrate_flow, lagrangian_residual, roundtrip_error, stability_compare, to_lagrangian
from .norms import check_gn, check_gn_grad_inf, check_gn_inf, check_ladyzhenskaya
from .solver import Environment, run
from .spectral import set_workers

EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


@dataclass
class RunManifest:
    """Deterministic record of a run; wall-clock time lives in ``timing.json``."""

    config_hash: str
    code_version: str
    outputs: dict = field(default_factory=dict)
    steps: int = 0
    snapshots: int = 0

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "outputs": dict(sorted(self.outputs.items())),
            "steps": self.steps,
            "snapshots": self.snapshots,
        }


# ---------------------------------------------------------------------------
# run


def execute(config: config_mod.ExperimentConfig, out_dir, threads: int = 1) -> RunManifest:
    """Run one experiment and write trajectory, diagnostics and manifest."""
    set_workers(threads)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = config.build_grid()
    rho0 = config.build_density(grid)
    u0 = config.build_velocity(grid)
    steps = config.step_times()
    started = time.perf_counter()
    traj = run(
        grid,
        rho0,
        u0,
        config.time.T,
        config.time.dt,
        mu=config.mu,
        output_times=config.output_times(),
        step_times=steps,
        record_environment=config.diagnostics.record_environment,
    )
    elapsed = time.perf_counter() - started
    outputs = {"config": "config.toml", "trajectory": "trajectory"}
    (out / "config.toml").write_text(config.to_toml())
    save_trajectory(traj, out / "trajectory")
    if config.diagnostics.decay and len(traj.snapshots) >= 3:
        record = decay_record(traj, q_values=tuple(config.diagnostics.q_values), s=config.s)
        decay_to_csv(record, out / "decay.csv")
        decay_to_json(record, out / "decay.json")
        outputs["decay"] = "decay.csv"
        outputs["decay_data"] = "decay.json"
    if config.diagnostics.energy:
        write_csv(
            out / "energy.csv",
            {
                "t": traj.diagnostics["time"],
                "energy": traj.diagnostics["energy"],
                "dissipation": traj.diagnostics["dissipation"],
                "residual": traj.energy_residual(),
            },
        )
        outputs["energy"] = "energy.csv"
    env = getattr(traj, "recorded_environment", None)
    if env is not None:
        from .io import write_fields

        write_fields(out / "environment.bin", {"times": env.times, "rho": env.rho, "v": env.v})
        outputs["environment"] = "environment.bin"
    manifest = RunManifest(
        config.config_hash(), __version__, outputs, len(steps) - 1, len(traj.snapshots)
    )
    write_json(out / "manifest.json", manifest.to_json())
    write_json(out / "timing.json", {"wall_clock_seconds": elapsed, "threads": threads})
    return manifest


def _load_config(args) -> config_mod.ExperimentConfig:
    if not args.config:
        raise ConfigError("config: --config is required")
    cfg = config_mod.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = config_mod.set_field(cfg, "velocity.seed", int(args.seed))
    return cfg


def cmd_run(args) -> int:
    cfg = _load_config(args)
    manifest = execute(cfg, args.out, args.threads)
    print(dumps_json(manifest.to_json()), end="")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# verify


def _check(name, value, tolerance, relation="<"):
    if relation == "<":
        passed = bool(value < tolerance)
    elif relation == "<=":
        passed = bool(value <= tolerance)
    else:
        passed = bool(value >= tolerance)
    return {"name": name, "value": float(value), "tolerance": float(tolerance), "relation": relation, "passed": passed}


def _suite_energy(traj, scale, run_dir):
    residual = traj.energy_residual()
    rho = np.array(traj.diagnostics["rho_min"]), np.array(traj.diagnostics["rho_max"])
    checks = [_check("energy_residual", float(residual.max()) if residual.size else 0.0, 1e-3 * scale)]
    checks.append(_check("density_min_drift", abs(rho[0].min() - rho[0][0]), 1e-12 * scale, "<="))
    checks.append(_check("density_max_drift", abs(rho[1].max() - rho[1][0]), 1e-12 * scale, "<="))
    return checks, {"residual": residual}


def _suite_theorem1(traj, scale, run_dir):
    if np.all([not np.any(s.u) for s in traj.snapshots]):
        return [_check("zero_data", 0.0, 0.0, "<=")], {}
    result = theorem1_suite(traj, min_snapshots=min(20, max(len(traj.snapshots) - 1, 1)))
    checks = [_check(f"plateau_{k}", float(not v), 0.5 * scale) for k, v in result["plateau"].items()]
    checks += [_check(f"finite_{k}", float(not math.isfinite(v)), 0.5) for k, v in result["ratios"].items()]
    return checks, result


def _suite_inequalities(traj, scale, run_dir):
    grid = traj.grid
    rows = {"ladyzhenskaya": [], "gn4": [], "gn_inf": [], "gn_grad_inf": []}
    for snap in traj.snapshots:
        if not np.any(snap.u):
            continue
        for comp in snap.u:
            if not np.any(comp - comp.mean()):
                continue
            rows["ladyzhenskaya"].append(check_ladyzhenskaya(grid, comp))
            rows["gn4"].append(check_gn(grid, comp, 4.0))
            rows["gn_inf"].append(check_gn_inf(grid, comp))
            rows["gn_grad_inf"].append(check_gn_grad_inf(grid, comp))
    summary = {k: float(max(v)) if v else 0.0 for k, v in rows.items()}
    checks = [_check(f"finite_{k}", float(not math.isfinite(v)), 0.5) for k, v in summary.items()]
    return checks, summary


def _suite_lagrangian(traj, scale, run_dir):
    flow = integrate_flow(traj)
    save_flow(flow, run_dir / "flow.bin")
    path = to_lagrangian(traj, flow)
    rho0 = traj.snapshots[0].rho
    resid = lagrangian_residual(rho0, path, flow, traj.mu)
    roundtrip = roundtrip_error(traj, flow)
    last = float(resid["relative"][-1]) if resid["relative"].size else 0.0
    checks = [
        _check("volume_error", flow.volume_error(), 1e-6 * scale),
        _check("roundtrip_error", roundtrip, 1e-4 * scale),
        _check("residual_final", last, 1e-3 * scale),
    ]
    return checks, {"residual_times": resid["times"], "residual": resid["relative"]}


def _suite_interpolation(traj, scale, run_dir):
    grid = traj.grid
    u0 = traj.snapshots[0].u
    if not np.any(u0):
        return [_check("zero_data", 0.0, 0.0, "<=")], {}
    demo = heat_dyadic_demo(grid, u0)
    checks = [_check("heat_direct_le_assembled", demo["direct"] - demo["assembled"], 1e-12 * demo["assembled"], "<=")]
    for atom in demo["atoms"]:
        ratio = atom["crossover_over_threshold"]
        checks.append(_check(f"crossover_j{atom['j']}", abs(math.log(ratio)) / math.log(4.0), 1.0 * scale, "<="))
    frames = traj.snapshots
    env = Environment(
        grid, traj.times, np.array([s.rho for s in frames]), np.array([s.u for s in frames])
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailNotConverged)
        report = ins_dyadic(env, u0, float(traj.times[-1]), step_times=traj.times, mu=traj.mu,
                            companions=False, check_pair=False)
    checks.append(_check("reassembly", report["reassembly_max"], 1e-6 * scale))
    checks.append(_check("direct_le_assembled", report["direct"] - report["assembled"],
                         1e-12 * max(report["assembled"], 1e-300), "<="))
    summary = {
        "heat_assembled_over_tally": demo["assembled_over_tally"],
        "assembled_over_tally": report["assembled_over_tally"],
        "direct_over_tally": report["direct_over_tally"],
        "reassembly_max": report["reassembly_max"],
    }
    return checks, summary


def _suite_stability(traj, scale, run_dir, other_dir=None):
    if other_dir is None:
        raise ConfigError("stability: --run2 is required")
    other = load_trajectory(Path(other_dir) / "trajectory")
    if traj.grid == other.grid and len(traj.snapshots) >= 2 and len(other.snapshots) >= 2:
        report = stability_compare(traj, other, flow1=integrate_flow(traj), flow2=integrate_flow(other))
    else:
        report = stability_compare(traj, other)
    data = report.to_json()
    checks = [_check("stabu_finite", float(not math.isfinite(report.stabu_ratio)), 0.5)]
    for p, value in report.stabrho_ratio.items():
        checks.append(_check(f"stabrho_finite_p{p:g}", float(not math.isfinite(value)), 0.5))
    if report.lagrangian:
        lag = report.lagrangian
        checks.append(_check("dA_inequality", lag["dA_lhs"] - lag["grad_dv_l2"], 1e-6 * scale, "<="))
    return checks, data


SUITES = {
    "energy": _suite_energy,
    "theorem1": _suite_theorem1,
    "inequalities": _suite_inequalities,
    "lagrangian": _suite_lagrangian,
    "interpolation": _suite_interpolation,
    "stability": _suite_stability,
}


def verify(run_dir, suite: str, tolerance_scale: float = 1.0, run2=None) -> tuple[int, dict]:
    run_dir = Path(run_dir)
    traj = load_trajectory(run_dir / "trajectory")
    if suite not in SUITES:
        raise ConfigError(f"suite: unknown suite '{suite}' (choose from {sorted(SUITES)})")
    if suite == "stability":
        checks, details = _suite_stability(traj, tolerance_scale, run_dir, run2)
    else:
        checks, details = SUITES[suite](traj, tolerance_scale, run_dir)
    failures = [c["name"] for c in checks if not c["passed"]]
    result = {"suite": suite, "passed": not failures, "failures": failures, "checks": checks, "details": details}
    write_json(run_dir / f"verify_{suite}.json", result)
    write_csv(
        run_dir / f"verify_{suite}.csv",
        {
            "value": [c["value"] for c in checks],
            "tolerance": [c["tolerance"] for c in checks],
            "passed": [c["passed"] for c in checks],
        },
    )
    return (EXIT_PASS if not failures else EXIT_FAIL), result


def cmd_verify(args) -> int:
    if not args.run:
        raise ConfigError("run: a run directory is required")
    code, result = verify(args.run, args.suite, args.tolerance_scale, args.run2)
    print(json.dumps({"suite": result["suite"], "passed": result["passed"], "failures": result["failures"]}))
    return code


# ---------------------------------------------------------------------------
# report


LADDER = [name for name, _, _ in THEOREM1_QUANTITIES]


def report(run_dir) -> dict:
    """Write plot-ready CSVs; returns the written paths."""
    run_dir = Path(run_dir)
    bundle = run_dir / "report"
    bundle.mkdir(exist_ok=True)
    traj = load_trajectory(run_dir / "trajectory")
    decay_csv = run_dir / "decay.csv"
    paths = {}
    if len(traj.snapshots) < 3:
        write_csv(bundle / "decay_ladder.csv", {"t": [], **{k: [] for k in LADDER}})
        write_csv(bundle / "budgets.csv", {"t": [], "lipschitz": [], "grad_u_linf": []})
        write_csv(bundle / "x_functionals.csv", {"t": [], "X1": [], "X2": [], "X3": []})
        write_csv(bundle / "stability.csv", {"t": []})
        return {k: str(bundle / f"{k}.csv") for k in ("decay_ladder", "budgets", "x_functionals", "stability")}
    if not decay_csv.exists():
        raise MissingDiagnostics(f"{run_dir}: no decay diagnostics (enable diagnostics.decay)")
    record = decay_from_files(decay_csv, run_dir / "decay.json")
    times = record.times
    mu = float(record.params.get("mu", traj.mu))
    norm0 = float(record.data.get("u0_l2", 0.0))
    ladder = {"t": times}
    for name, power, col in THEOREM1_QUANTITIES:
        ladder[name] = (mu * times) ** power * record[col] / norm0 if norm0 > 0 else np.zeros_like(times)
    paths["decay_ladder"] = write_csv(bundle / "decay_ladder.csv", ladder)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailNotConverged)
        budget = lipschitz_budget(record)
    from scipy.integrate import cumulative_trapezoid

    paths["budgets"] = write_csv(
        bundle / "budgets.csv",
        {
            "t": times,
            "lipschitz": cumulative_trapezoid(record["grad_u_linf"], times, initial=0.0),
            "grad_u_linf": record["grad_u_linf"],
        },
    )
    functionals = weighted_functionals(record)
    paths["x_functionals"] = write_csv(
        bundle / "x_functionals.csv",
        {"t": times, **{f"X{i}": functionals[f"X{i}"]["values"] for i in (1, 2, 3)}},
    )
    stab_path = run_dir / "verify_stability.json"
    if stab_path.exists():
        data = read_json(stab_path)["details"]
        columns = {"t": data["times"]}
        for p, series in sorted(data["drho_series"].items()):
            columns[f"drho_w-1_p{float(p):g}"] = series
        paths["stability"] = write_csv(bundle / "stability.csv", columns)
    else:
        paths["stability"] = write_csv(bundle / "stability.csv", {"t": []})
    write_json(bundle / "summary.json", {"budget": budget})
    return {k: str(v) for k, v in paths.items()}


def cmd_report(args) -> int:
    paths = report(args.run)
    print(dumps_json(paths), end="")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# sweep


def _parse_values(text: str):
    values = []
    for item in text.split(","):
        item = item.strip()
        try:
            values.append(int(item))
        except ValueError:
            try:
                values.append(float(item))
            except ValueError:
                values.append(item)
    return values


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if not args.param or "=" not in args.param:
        raise ConfigError("param: expected --param section.field=v1,v2,...")
    key, raw = args.param.split("=", 1)
    variants = [config_mod.set_field(cfg, key, v) for v in _parse_values(raw)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def job(item):
        index, variant = item
        return execute(variant, out / f"run_{index:03d}", 1).to_json()

    # FFT threads inside each run stay at 1; runs execute concurrently instead
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        manifests = list(pool.map(job, enumerate(variants)))
    summary = {
        "parameter": key,
        "values": _parse_values(raw),
        "runs": [f"run_{i:03d}" for i in range(len(variants))],
        "config_hashes": [m["config_hash"] for m in manifests],
    }
    write_json(out / "sweep.json", summary)
    print(dumps_json(summary), end="")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inhomns", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="check a stored run against a suite")
    p_verify.add_argument("run")
    p_verify.add_argument("--suite", required=True, choices=sorted(SUITES))
    p_verify.add_argument("--run2")
    p_verify.add_argument("--tolerance-scale", type=float, default=1.0)
    p_verify.add_argument("--threads", type=int, default=1)
    p_verify.set_defaults(func=cmd_verify)

    p_report = sub.add_parser("report", help="write plot-ready CSV files")
    p_report.add_argument("run")
    p_report.set_defaults(func=cmd_report)

    p_sweep = sub.add_parser("sweep", help="run a one-parameter family")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--threads", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        set_workers(args.threads)
    try:
        return args.func(args)
    except (ConfigError, MissingDiagnostics, FileNotFoundError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_INPUT
    except InhomnsError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
