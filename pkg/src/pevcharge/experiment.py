"""Run an algorithm on a scenario, write its outputs, and compare finished runs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import storage
from .analysis import (
    BoundReport,
    CostReport,
    StabilitySummary,
    bound_report,
    cost_report,
    scaled_beta,
    stability_stats,
)
from .errors import InputError, NotStrictlyFeasible, ScenarioMismatch
from .offline import SolverSettings, solve_static_forecast, solve_static_optimal
from .online import params_for, run_horizon
from .scenario import Scenario
from .schedule import HorizonRun, schedule_violations, simulate_schedule

ALGORITHMS = ("online", "static-optimal", "static-forecast")
TRACE_CSV = "trace.csv"
SCHEDULE_CSV = "schedule.csv"
QUEUES_CSV = "queues.csv"
RUN_JSON = "run.json"
COST_JSON = "cost.json"
BOUND_JSON = "bound.json"
STABILITY_JSON = "stability.json"


@dataclass
class RunResult:
    algorithm: str
    scenario: Scenario
    run: HorizonRun
    cost: CostReport
    beta: float | None = None
    bound: BoundReport | None = None
    stability: StabilitySummary | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags


def default_beta(scenario: Scenario) -> float:
    return scaled_beta(max(scenario.households, 1))


def run_algorithm(scenario: Scenario, algorithm: str = "online", beta: float | None = None,
                  online: dict | None = None, solver: dict | None = None,
                  with_bounds: bool = True) -> RunResult:
    """Run one algorithm and evaluate it against the scenario's actual net load."""
    if algorithm not in ALGORITHMS:
        raise InputError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    online = dict(online or {})
    beta = online.pop("beta", None) if beta is None else beta
    flags = []
    if algorithm == "online":
        beta = default_beta(scenario) if beta is None else float(beta)
        params = params_for(scenario, beta, **online)
        schedule, run = run_horizon(scenario, params)
        if not run.converged.all():
            flags.append(f"bisection did not converge in {int((~run.converged).sum())} slots")
    else:
        settings = SolverSettings(**(solver or {}))
        solve = solve_static_optimal if algorithm == "static-optimal" else solve_static_forecast
        schedule = solve(scenario, settings=settings)
        if not schedule.info.get("converged", True):
            flags.append("static solver stopped before reaching its tolerance")
        run = simulate_schedule(schedule, scenario)
    bad = schedule_violations(schedule, scenario, require_balance=False)
    if bad:
        flags.append("infeasible schedule: " + "; ".join(bad))
    cost = cost_report(schedule, scenario, check=False)
    bound = None
    if algorithm == "online" and with_bounds and scenario.n_vehicles:
        try:
            bound = bound_report(run, beta, scenario)
        except NotStrictlyFeasible as exc:
            flags.append(str(exc))
    stab = stability_stats(run, scenario) if scenario.depart is not None else None
    return RunResult(algorithm, scenario, run, cost, beta, bound, stab, flags)


def class_mean_queues(run: HorizonRun, scenario: Scenario) -> np.ndarray:
    """``(classes, D*T)`` mean queue at the end of each slot."""
    q = run.queues[:, 1:]
    out = np.full((len(scenario.class_names), q.shape[1]), np.nan)
    for ci in range(len(scenario.class_names)):
        members = scenario.class_index == ci
        if members.any():
            out[ci] = q[members].mean(axis=0)
    return out


def write_run(result: RunResult, out_dir, plot: bool = False) -> Path:
    """Write traces, reports and metadata for one run; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc, run = result.scenario, result.run
    fmt = storage.fmt
    cq = class_mean_queues(run, sc)
    total = run.total_load
    header = ["slot", "S_net", "total_load", *[f"mean_queue_{c}" for c in sc.class_names],
              "U_ref", "iters"]
    storage.write_csv(out / TRACE_CSV, header, (
        [k, fmt(run.net_load[k]), fmt(total[k]), *[fmt(x) for x in cq[:, k]],
         fmt(run.uref[k]), int(run.iters[k])]
        for k in range(sc.grid.horizon)))
    vcols = [f"v{i}" for i in range(sc.n_vehicles)]
    storage.write_csv(out / SCHEDULE_CSV, ["slot", *vcols],
                      ([k, *map(fmt, run.powers[:, k])] for k in range(sc.grid.horizon)))
    storage.write_csv(out / QUEUES_CSV, ["slot", *vcols],
                      ([k, *map(fmt, run.queues[:, k])] for k in range(sc.grid.horizon + 1)))
    storage.dump_json(result.cost.to_dict(), out / COST_JSON)
    if result.bound is not None:
        storage.dump_json(result.bound.to_dict(), out / BOUND_JSON)
    if result.stability is not None:
        storage.dump_json(result.stability.to_dict(), out / STABILITY_JSON)
    meta = {
        "algorithm": result.algorithm,
        "scenario_fingerprint": storage.fingerprint(sc),
        "beta": result.beta,
        "fleet_size": sc.n_vehicles,
        "days": sc.days,
        "strictly_feasible": sc.strictly_feasible,
        "max_iters": int(run.iters.max()) if run.iters.size else 0,
        "flags": result.flags,
        "ok": result.ok,
    }
    storage.dump_json(meta, out / RUN_JSON)
    if plot:
        from .plotting import plot_load, plot_queues

        dt = sc.grid.slot_length
        plot_load(out / "load.png", run.net_load, {result.algorithm: total}, dt)
        plot_queues(out / "soc.png", run.queues, sc.class_index, sc.class_names,
                    sc.fleet.capacity, dt)
    return out


# --- comparison -----------------------------------------------------------


@dataclass
class RunSummary:
    path: str
    algorithm: str
    fingerprint: str
    f: float
    f_tilde: float
    variance: float
    peak: float
    median_completion: dict


def read_run(path) -> tuple[RunSummary, np.ndarray]:
    root = Path(path)
    try:
        meta = json.loads((root / RUN_JSON).read_text(encoding="utf-8"))
        cost = json.loads((root / COST_JSON).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InputError(f"{root} is not a run directory ({exc.filename} missing)") from exc
    header, rows = storage.read_csv(root / TRACE_CSV)
    load = np.array([float(r[header.index("total_load")]) for r in rows])
    comp = {}
    if (root / STABILITY_JSON).exists():
        stab = json.loads((root / STABILITY_JSON).read_text(encoding="utf-8"))
        comp = {c["name"]: c["median_completion_slot"] for c in stab["classes"]}
    summary = RunSummary(str(root), meta["algorithm"], meta["scenario_fingerprint"],
                         cost["f"], cost["f_tilde"], cost["variance"], cost["peak"], comp)
    return summary, load


def compare_runs(paths) -> dict:
    """Side-by-side metrics for runs on one scenario; gaps are relative to the first run."""
    if len(paths) < 2:
        raise InputError("compare needs at least two run directories")
    runs = [read_run(p)[0] for p in paths]
    fps = {r.fingerprint for r in runs}
    if len(fps) != 1:
        raise ScenarioMismatch("runs were produced on different scenarios: " + ", ".join(sorted(fps)))
    base = runs[0]

    def rel(a, b):
        return 0.0 if a == b else (a - b) / abs(b) if b else math.inf

    rows = []
    for r in runs:
        rows.append({
            "path": r.path, "algorithm": r.algorithm, "f": r.f, "f_tilde": r.f_tilde,
            "variance": r.variance, "peak": r.peak,
            "f_tilde_gap": rel(r.f_tilde, base.f_tilde),
            "variance_gap": rel(r.variance, base.variance),
            "peak_gap": rel(r.peak, base.peak),
            "median_completion": r.median_completion,
        })
    flattest = min(range(len(runs)), key=lambda i: runs[i].variance)
    report = {"baseline": base.path, "runs": rows, "flattest": runs[flattest].path}
    online = [r for r in runs if r.algorithm == "online"]
    forecast = [r for r in runs if r.algorithm == "static-forecast"]
    if online and forecast:
        report["online_variance_lower"] = all(o.variance < f.variance
                                              for o in online for f in forecast)
    return report


def write_comparison(report: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.dump_json(report, out / "compare.json")
    fmt = storage.fmt
    storage.write_csv(out / "compare.csv",
                      ["path", "algorithm", "f", "f_tilde", "variance", "peak",
                       "f_tilde_gap", "variance_gap", "peak_gap"],
                      ([r["path"], r["algorithm"], *[fmt(r[k]) for k in (
                          "f", "f_tilde", "variance", "peak", "f_tilde_gap", "variance_gap",
                          "peak_gap")]] for r in report["runs"]))
    return out
