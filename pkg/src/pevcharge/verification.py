"""Property checks on seeded desk-scale scenarios, one function per acceptance criterion.

Each check returns a `CheckResult`; `run_all` runs them in order. The test
suite and the ``verify`` command share these functions.
"""

from __future__ import annotations

import functools
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    REFERENCE_C,
    bound_report,
    cost_report,
    drift_trace,
    scaled_beta,
    stability_stats,
)
from .model import FleetArrays, NetLoadTrace, SlotGrid, VehicleSpec
from .offline import (
    SolverSettings,
    brute_force_schedule_oracle,
    day_tubes,
    max_weight_oracle,
    project_tube,
    solve_static_forecast,
    solve_static_optimal,
)
from .online import default_params, max_weight_objective, params_for, run_horizon, solve_slot
from .scenario import PriorityClass, Scenario, ScenarioConfig, generate_scenario
from .schedule import ChargingSchedule

DESK_HOUSEHOLDS = 100
DESK_PENETRATION = 0.3
OVERNIGHT_HOURS = (22.0, 6.0)
FORECAST_DAYS = 3
BOUND_DAYS = 30
PRIORITY_DAYS = 5
PRIORITY_CLASSES = (PriorityClass("high", 0.1, 877.0), PriorityClass("normal", 0.9, REFERENCE_C))


@dataclass(frozen=True)
class CheckResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:>2}: {self.title} ({self.seconds:.1f} s) {self.detail}"


def _timed(number: int, title: str, budget: float | None = None):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            dt = time.perf_counter() - t0
            if budget is not None and dt >= budget:
                passed = False
                detail += f"; runtime {dt:.1f} s over the {budget:.0f} s budget"
            return CheckResult(number, title, bool(passed), detail, dt)

        return inner

    return wrap


def desk_beta() -> float:
    return scaled_beta(DESK_HOUSEHOLDS)


@functools.lru_cache(maxsize=16)
def desk_scenario(seed: int = 0, days: int = 1, classes=None) -> Scenario:
    cfg = ScenarioConfig(households=DESK_HOUSEHOLDS, penetration=DESK_PENETRATION, days=days,
                         seed=seed, **({"classes": classes} if classes else {}))
    return generate_scenario(cfg)


@functools.lru_cache(maxsize=8)
def _online(seed: int, days: int, beta: float, classes=None):
    sc = desk_scenario(seed, days, classes)
    return run_horizon(sc, params_for(sc, beta))


# --- random instance generators ----------------------------------------------


def random_small_scenario(rng, max_vehicles: int = 10, days: int = 1) -> Scenario:
    households = int(rng.integers(1, max(2, int(max_vehicles / 1.8) + 1)))
    cfg = ScenarioConfig(households=households, penetration=1.0, days=days,
                         seed=int(rng.integers(2 ** 31)))
    return generate_scenario(cfg)


def random_feasible_schedule(rng, scenario: Scenario) -> ChargingSchedule:
    """A random point of the feasible set: project noise onto every vehicle tube."""
    p = np.zeros((scenario.n_vehicles, scenario.grid.horizon))
    for d in range(scenario.days):
        sl = scenario.day_slice(d)
        for i, tube in enumerate(day_tubes(scenario, d)):
            z = rng.uniform(-1.0, 3.0, size=tube.ub.size) * scenario.fleet.p_max[i]
            p[i, sl] = project_tube(z, tube)
    return ChargingSchedule(p, "oracle")


def random_slot(rng, max_vehicles: int = 6, beta: float | None = None):
    """Queues, fleet, availability and a net load near the charging band."""
    beta = desk_beta() if beta is None else beta
    n = int(rng.integers(1, max_vehicles + 1))
    dt, eta, p_max = 0.25, 0.9, 1.92
    c = rng.choice([REFERENCE_C, 877.0], size=n) + rng.uniform(0, 0.4, size=n)
    fleet = FleetArrays(np.full(n, 16.0), np.full(n, p_max), np.full(n, eta), c, np.zeros(n))
    q = rng.uniform(0, 16.0, size=n)
    q[rng.random(n) < 0.15] = rng.uniform(0, 0.3)  # some nearly full batteries
    avail = rng.random(n) < 0.85
    w = (q + c) * eta * dt
    s_net = rng.uniform(w.min() / (2 * beta) - n * p_max, w.max() / (2 * beta) + 1.0)
    return q, fleet, avail, float(s_net), beta, dt


def random_tiny_scenario(rng, step: float = 0.01) -> Scenario:
    """N <= 2 vehicles, T <= 4 slots, one day; daily energy on the power grid."""
    t = int(rng.integers(2, 5))
    grid = SlotGrid.from_slots(t, 1)
    dt = grid.slot_length
    n = int(rng.integers(1, 3))
    eta = 0.9
    specs, avail, cons, q0 = [], np.ones((n, t), dtype=bool), np.zeros((n, t)), []
    for i in range(n):
        p_max = round(float(rng.uniform(0.08, 0.3)), 2)
        away = int(rng.integers(0, t))
        avail[i, away] = False
        free = t - 1
        units = int(rng.integers(0, int(free * p_max / step) + 1))
        cons[i, away] = units * step * eta * dt
        total = cons[i].sum()
        cap = max(3.0 * total, 1.0)
        specs.append(VehicleSpec(cap, p_max, eta, 0.0, float(cons[i].max())))
        # Enough queue to absorb the day's charging whatever the slot order.
        q0.append(float(rng.uniform(total, cap - total)))
    s = rng.uniform(0.0, 1.0, size=t)
    return Scenario(grid, NetLoadTrace(s), tuple(specs), avail, cons, np.array(q0))


# --- criteria --------------------------------------------------------------


@_timed(1, "mean-offset identity f = f_tilde - mu^2", budget=5.0)
def check_identity(seed: int = 1, count: int = 100):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        sc = random_small_scenario(rng)
        sched = random_feasible_schedule(rng, sc)
        rep = cost_report(sched, sc)
        if not rep.balanced:
            return False, "a projected schedule failed the daily energy balance"
        worst = max(worst, rep.identity_residual)
    return worst <= 1e-9, f"worst relative residual {worst:.2e} over {count} schedules"


@_timed(2, "per-slot max-weight optimality vs exhaustive oracle", budget=30.0)
def check_slot_optimality(seed: int = 2, count: int = 200):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        q, fleet, avail, s, beta, dt = random_slot(rng)
        params = default_params(beta, s, s, float(fleet.p_max.sum()))
        sol = solve_slot(s, q, fleet, avail, params, dt)
        got = max_weight_objective(sol.powers, q, fleet, s, beta, dt)
        _, best = max_weight_oracle(q, fleet, avail, s, beta, dt)
        worst = max(worst, (best - got) / max(1.0, abs(best)))
    return worst <= 1e-3, f"worst relative shortfall {worst:.2e} over {count} slots"


@_timed(3, "bisection iterations <= 21 with default bracket")
def check_iterations(seed: int = 3, count: int = 200):
    rng = np.random.default_rng(seed)
    worst = 0
    for _ in range(count):
        q, fleet, avail, s, beta, dt = random_slot(rng)
        params = default_params(beta, s, s, float(fleet.p_max.sum()))
        worst = max(worst, solve_slot(s, q, fleet, avail, params, dt).iters)
    _, run = _online(0, BOUND_DAYS, desk_beta())
    horizon = int(run.iters.max())
    ok = worst <= 21 and horizon <= 21 and bool(run.converged.all())
    return ok, f"max {worst} over random slots, {horizon} over a {BOUND_DAYS}-day desk run"


@_timed(4, "static solver vs brute-force grid oracle", budget=60.0)
def check_brute_force(seed: int = 4, count: int = 50, step: float = 0.01):
    rng = np.random.default_rng(seed)
    settings = SolverSettings(tol=1e-12)
    worst = -np.inf
    for _ in range(count):
        sc = random_tiny_scenario(rng, step)
        sol = solve_static_optimal(sc, settings)
        f_sol = float(np.mean(sol.total_load(sc.net_load.values) ** 2))
        f_orc = brute_force_schedule_oracle(sc, step).info["objective"]
        y = np.abs(sol.total_load(sc.net_load.values))
        nh = sc.n_vehicles * step
        grid_err = float(np.mean(2 * y * nh + nh ** 2))
        tol = 1e-9 * max(1.0, f_sol)
        if f_orc < f_sol - tol:
            return False, f"oracle beat the solver by {f_sol - f_orc:.3g}"
        worst = max(worst, (f_orc - f_sol) - grid_err - tol)
    return worst <= 0, f"largest excess over the grid-error allowance {worst:.3g}"


def overnight_mask(grid: SlotGrid) -> np.ndarray:
    h = (np.arange(grid.horizon) % grid.slots_per_day) * grid.slot_length
    start, end = OVERNIGHT_HOURS
    return (h >= start) | (h < end)


@_timed(5, "valley filling: flat optimal plateau, online f_tilde within 10%")
def check_valley_filling(seed: int = 0):
    sc = desk_scenario(seed, 1)
    opt = solve_static_optimal(sc)
    load = opt.total_load(sc.net_load.values)
    night = load[overnight_mask(sc.grid)]
    spread = float(np.max(np.abs(night / night.mean() - 1.0)))
    on, _ = _online(seed, 1, desk_beta())
    f_opt = cost_report(opt, sc).f_tilde
    f_on = cost_report(on, sc, check=False).f_tilde
    gap = f_on / f_opt - 1.0
    ok = spread <= 0.01 and gap <= 0.10
    return ok, (f"plateau {night.mean():.1f} kW, max deviation {100 * spread:.2f}%; "
                f"online f_tilde gap {100 * gap:.2f}%")


@_timed(6, "robustness: static-forecast variance above online on >= 90% of seeds")
def check_forecast_robustness(seeds: int = 20, days: int = FORECAST_DAYS):
    wins, margins = 0, []
    beta = desk_beta()
    for seed in range(seeds):
        sc = desk_scenario(seed, days)
        fc = solve_static_forecast(sc)
        var_fc = float(fc.total_load(sc.net_load.values).var())
        _, run = run_horizon(sc, params_for(sc, beta))
        var_on = float(run.total_load.var())
        wins += var_fc > var_on
        margins.append(var_fc - var_on)
    ok = wins >= int(np.ceil(0.9 * seeds))
    return ok, f"{wins}/{seeds} seeds, smallest margin {min(margins):.1f} kW^2"


@_timed(7, "cost and queue bounds over 30 days; beta trade-off direction")
def check_bounds(seed: int = 0, days: int = BOUND_DAYS):
    sc = desk_scenario(seed, days)
    beta0 = desk_beta()
    _, run = _online(seed, days, beta0)
    opt = solve_static_optimal(sc)
    costs = cost_report(opt, sc).f_tilde_by_day
    rep = bound_report(run, beta0, sc, optimal_costs=costs)
    peaks, queues = [], []
    for beta in (beta0 / 5, beta0, beta0 * 5):
        _, r = _online(seed, days, beta)
        peaks.append(float(r.total_load.max()))
        queues.append(float(r.queues[:, 1:].mean()))
    monotone = all(a >= b - 1e-9 for a, b in zip(peaks, peaks[1:])) and all(
        a <= b + 1e-9 for a, b in zip(queues, queues[1:]))
    ok = rep.cost_ok and rep.queue_ok and monotone
    return ok, (f"cost {rep.lhs_cost:.0f} <= {rep.rhs_cost_finite:.0f}, "
                f"queue {rep.lhs_queue:.1f} <= {rep.rhs_queue_finite:.3g}; "
                f"peaks {[round(p, 1) for p in peaks]}, mean queues {[round(q, 2) for q in queues]}")


@_timed(8, "service differentiation and day-boundary queue return")
def check_priority(seed: int = 0, days: int = PRIORITY_DAYS, rel_tol: float = 0.01):
    sc = desk_scenario(seed, days, PRIORITY_CLASSES)
    _, run = _online(seed, days, desk_beta(), PRIORITY_CLASSES)
    stats = stability_stats(run, sc)
    med = {c.name: c.median_completion_slot for c in stats.classes}
    earlier = med["high"] < med["normal"]
    t = sc.grid.slots_per_day
    boundary = run.queues[:, ::t]
    u0 = boundary[:, :1]
    dev = np.abs(boundary - u0) / np.maximum(u0, 1e-12)
    returned = bool(np.all(dev <= rel_tol))
    cap_ok = bool(run.queues.max() <= sc.fleet.capacity.max() + 1e-9)
    return earlier and returned, (
        f"median completion slot high {med['high']:.0f} vs normal {med['normal']:.0f}; "
        f"worst day-boundary deviation {100 * dev.max():.0f}% of the initial queue "
        f"({100 * float(np.mean(dev <= rel_tol)):.0f}% of vehicle-days within {100 * rel_tol:.0f}%); "
        f"queues bounded by capacity: {cap_ok}")


@_timed(9, "one-slot drift bound on every slot of the 30-day run")
def check_drift(seed: int = 0, days: int = BOUND_DAYS):
    sc = desk_scenario(seed, days)
    beta = desk_beta()
    _, run = _online(seed, days, beta)
    tr = drift_trace(run, beta, sc)
    return tr.holds(), f"{tr.drifts.size} slots, minimum slack {tr.slack.min():.3g}"


@_timed(10, "run command is byte-for-byte deterministic")
def check_determinism(seed: int = 7):
    from click.testing import CliRunner

    from .cli import main

    outputs = []
    runner = CliRunner()
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            out = Path(tmp) / f"run{k}"
            res = runner.invoke(main, ["run", "--seed", str(seed), "--days", "2",
                                       "--algo", "online", "--out", str(out)])
            if res.exit_code != 0:
                return False, f"run exited with {res.exit_code}: {res.output.strip()}"
            outputs.append({p.name: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    same = outputs[0] == outputs[1] and bool(outputs[0])
    names = sorted(outputs[0])
    return same, f"{len(names)} files compared ({', '.join(names)})"


CHECKS = (
    check_identity,
    check_slot_optimality,
    check_iterations,
    check_brute_force,
    check_valley_filling,
    check_forecast_robustness,
    check_bounds,
    check_priority,
    check_drift,
    check_determinism,
)


def run_all(echo=print) -> list[CheckResult]:
    results = []
    for check in CHECKS:
        res = check()
        if echo:
            echo(res.line())
        results.append(res)
    return results
