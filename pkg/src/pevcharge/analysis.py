"""Cost metrics, bound constants, Lyapunov drift and queue-stability statistics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InfeasibleSchedule, NotStrictlyFeasible
from .scenario import Scenario
from .schedule import ChargingSchedule, HorizonRun, schedule_violations

IDENTITY_RTOL = 1e-9

# Reference weights and the feeder size they were tuned for.
REFERENCE_BETA = 0.0205
REFERENCE_C = 577.0
REFERENCE_HOUSEHOLDS = 3402 / 1.8


def scaled_beta(households: int, beta: float = REFERENCE_BETA,
                reference_households: float = REFERENCE_HOUSEHOLDS) -> float:
    """Carry ``beta`` to a feeder of a different size.

    Loads and charging powers scale with the household count ``c``; dividing
    ``beta`` by ``c`` keeps every slot's max-weight argmax (and so the on-off
    pattern and the charging reference) unchanged with ``C_i`` and queues
    held fixed.
    """
    if households <= 0:
        raise ValueError("households must be > 0")
    return beta * reference_households / households


@dataclass(frozen=True)
class CostReport:
    """Per-day and horizon-average load metrics.

    ``f`` is the variance about the demand-implied mean ``mu`` (net load plus
    grid-side consumption); ``f_tilde`` is the mean squared load. When every
    vehicle's daily charging balances its consumption, ``f == f_tilde - mu**2``.
    ``variance`` is the plain variance of the realised load about its own
    daily mean, which is what comparisons between algorithms use.
    """

    f: float
    f_tilde: float
    mu: float
    variance: float
    peak: float
    f_by_day: list[float]
    f_tilde_by_day: list[float]
    mu_by_day: list[float]
    variance_by_day: list[float]
    balanced: bool
    identity_residual: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def daily_metrics(load, demand_mean) -> tuple[float, float, float]:
    """``(f, f_tilde, variance)`` of one day's total load."""
    load = np.asarray(load, dtype=float)
    return (float(np.mean((load - demand_mean) ** 2)), float(np.mean(load ** 2)),
            float(load.var()))


def demand_mean(scenario: Scenario, day: int) -> float:
    """Daily mean of net load plus the grid energy needed to cover consumption."""
    sl = scenario.day_slice(day)
    fl, dt = scenario.fleet, scenario.grid.slot_length
    grid_side = (scenario.consumption[:, sl] / (fl.eta[:, None] * dt)).sum() if len(fl) else 0.0
    return float(scenario.net_load.values[sl].mean() + grid_side / scenario.grid.slots_per_day)


def cost_report(schedule: ChargingSchedule, scenario: Scenario, net_load=None,
                check: bool = True, tol: float = 1e-7) -> CostReport:
    """Evaluate a schedule against the actual (or a given) net load.

    With ``check`` the schedule must respect power, availability and queue
    constraints; the daily balance is only required for the identity check.
    """
    if check:
        bad = schedule_violations(schedule, scenario, tol, require_balance=False)
        if bad:
            raise InfeasibleSchedule("; ".join(bad))
    balanced = not schedule_violations(schedule, scenario, tol, require_balance=True)
    s = scenario.net_load.values if net_load is None else np.asarray(net_load, dtype=float)
    load = schedule.total_load(s)
    fs, fts, mus, vs = [], [], [], []
    residual = 0.0
    for d in range(scenario.days):
        sl = scenario.day_slice(d)
        mu = demand_mean(scenario, d) if net_load is None else float(
            s[sl].mean() + (demand_mean(scenario, d) - scenario.net_load.values[sl].mean()))
        f, ft, var = daily_metrics(load[sl], mu)
        if balanced:
            r = abs(f - (ft - mu ** 2)) / max(1.0, ft)
            residual = max(residual, r)
            if r > IDENTITY_RTOL:
                raise AssertionError(f"day {d}: f != f_tilde - mu^2 (relative residual {r:.3g})")
        fs.append(f)
        fts.append(ft)
        mus.append(mu)
        vs.append(var)
    return CostReport(
        f=float(np.mean(fs)), f_tilde=float(np.mean(fts)), mu=float(np.mean(mus)),
        variance=float(np.mean(vs)), peak=float(load.max()),
        f_by_day=fs, f_tilde_by_day=fts, mu_by_day=mus, variance_by_day=vs,
        balanced=balanced, identity_residual=residual,
    )


@dataclass(frozen=True)
class BoundReport:
    k: list[float]
    b1: float
    b2: float
    b3: float
    f_tilde_max: float
    epsilon: float
    beta: float
    f0: float
    optimal_cost: float  # mean over days of the static optimum
    lhs_cost: float
    rhs_cost: float  # asymptotic right-hand side
    rhs_cost_finite: float  # includes the F(0) / (beta D T) transient
    lhs_queue: float
    rhs_queue: float
    rhs_queue_finite: float  # includes the F(0) / (eps D T) transient
    cost_ok: bool
    queue_ok: bool
    queue_bound_vacuous: bool

    def to_dict(self) -> dict:
        return asdict(self)


def bound_constants(scenario: Scenario) -> dict:
    """Schedule-independent constants of the cost and queue bounds."""
    fl, dt = scenario.fleet, scenario.grid.slot_length
    a_max = scenario.consumption.max(axis=1) if scenario.n_vehicles else np.zeros(0)
    k = np.maximum(a_max, fl.eta * fl.p_max * dt)
    eps = scenario.epsilon
    return {
        "k": k,
        "b1": float(np.sum((fl.c_offset + k) * k)),
        "b2": float(eps * k.sum()) if np.isfinite(eps) else 0.0,
        "b3": float(np.sum(k ** 2)),
        "f_tilde_max": float((scenario.net_load.s_max + fl.p_max.sum()) ** 2),
        "epsilon": eps,
    }


def lyapunov_value(queues, c_offset, beta: float, cost_so_far: float = 0.0) -> float:
    q = np.asarray(queues, dtype=float)
    return float(0.5 * np.sum((q + c_offset) ** 2) + beta * cost_so_far)


def bound_report(run: HorizonRun, beta: float, scenario: Scenario,
                 optimal_costs=None, settings=None) -> BoundReport:
    """Check the finite-horizon cost and queue bounds on an online run.

    ``optimal_costs`` are the per-day static optima; they are computed with
    the offline solver when not supplied.
    """
    eps = scenario.epsilon
    if not (eps > 0 and scenario.strictly_feasible):
        raise NotStrictlyFeasible(f"strict feasibility margin {eps:.3g} is not positive enough")
    if optimal_costs is None:
        from .offline import SolverSettings, solve_static_optimal

        sched = solve_static_optimal(scenario, settings or SolverSettings())
        optimal_costs = cost_report(sched, scenario).f_tilde_by_day
    const = bound_constants(scenario)
    T, D = scenario.grid.slots_per_day, scenario.days
    horizon = D * T
    c = scenario.fleet.c_offset
    f0 = lyapunov_value(run.queues[:, 0], c, beta)
    opt = float(np.mean(optimal_costs))
    b1, b2, b3, fmax = const["b1"], const["b2"], const["b3"], const["f_tilde_max"]

    lhs_cost = float(np.mean(run.total_load ** 2))
    rhs_cost = opt + b1 / beta + b3 * (T + 1) / (2 * beta)
    rhs_cost_finite = rhs_cost + f0 / (beta * horizon)

    lhs_queue = float(run.queues[:, 1:].sum() / horizon)
    rhs_queue = ((b2 + b3) * (T + 1) / (2 * eps) + b1 / eps + beta * fmax / eps - c.sum())
    rhs_queue_finite = rhs_queue + f0 / (eps * horizon)
    return BoundReport(
        k=const["k"].tolist(), b1=b1, b2=b2, b3=b3, f_tilde_max=fmax, epsilon=eps, beta=beta,
        f0=f0, optimal_cost=opt,
        lhs_cost=lhs_cost, rhs_cost=rhs_cost, rhs_cost_finite=rhs_cost_finite,
        lhs_queue=lhs_queue, rhs_queue=rhs_queue, rhs_queue_finite=rhs_queue_finite,
        cost_ok=bool(lhs_cost <= rhs_cost_finite), queue_ok=bool(lhs_queue <= rhs_queue_finite),
        queue_bound_vacuous=bool(rhs_queue_finite < 0),
    )


@dataclass(frozen=True)
class DriftTrace:
    """Lyapunov values ``F(0..DT)``, one-slot drifts and their per-slot bounds."""

    values: np.ndarray
    drifts: np.ndarray
    bounds: np.ndarray

    @property
    def slack(self) -> np.ndarray:
        return self.bounds - self.drifts

    def holds(self, rtol: float = 1e-9) -> bool:
        scale = np.maximum(1.0, np.abs(self.values[:-1]))
        return bool(np.all(self.slack >= -rtol * scale))


def drift_trace(run: HorizonRun, beta: float, scenario: Scenario) -> DriftTrace:
    """``F(n) = 0.5 * sum (U + C)^2 + beta * cumulative squared load`` and its drift bound.

    The bound per slot is ``sum (U + C)(A - eta P dt) + B3 + beta * load^2``,
    with ``A`` the consumption actually applied after the capacity clamp.
    """
    fl, dt = scenario.fleet, scenario.grid.slot_length
    c = fl.c_offset[:, None]
    q = run.queues
    load_sq = run.total_load ** 2
    quad = 0.5 * np.sum((q + c) ** 2, axis=0)
    cost = np.concatenate([[0.0], np.cumsum(load_sq)])
    values = quad + beta * cost
    drifts = np.diff(values)
    b3 = bound_constants(scenario)["b3"]
    delta = run.applied - fl.eta[:, None] * run.powers * dt
    bounds = np.sum((q[:, :-1] + c) * delta, axis=0) + b3 + beta * load_sq
    return DriftTrace(values, drifts, bounds)


@dataclass
class ClassStats:
    name: str
    vehicles: int
    mean_queue: float
    max_queue: float
    full_departure_fraction: float
    median_completion_slot: float
    completion_slots: list[int] = field(default_factory=list)


@dataclass
class StabilitySummary:
    classes: list[ClassStats]
    strictly_feasible: bool
    epsilon: float
    boundary_queues: list[list[float]]  # per day boundary, per vehicle
    max_boundary_drift: float  # max |U(dT) - U(0)| / capacity over vehicles and days

    def to_dict(self) -> dict:
        d = asdict(self)
        for c in d["classes"]:
            c.pop("completion_slots")
        d.pop("boundary_queues")
        return d


def completion_slots(run: HorizonRun, scenario: Scenario):
    """For every vehicle-day, the slot (counted from the arrival day's start) when charging ended.

    A charging window runs from the day's arrival to the next departure (or
    the end of the horizon). Completion is the end of the last slot with
    positive power in that window; a vehicle that never charges completes on
    arrival. Returns ``(vehicle, day, slot)`` triples.
    """
    if scenario.arrive is None or scenario.depart is None:
        raise ValueError("scenario lacks driving patterns")
    T, D, H = scenario.grid.slots_per_day, scenario.days, scenario.grid.horizon
    out = []
    for i in range(scenario.n_vehicles):
        for d in range(D):
            start = d * T + int(scenario.arrive[i, d])
            stop = (d + 1) * T + int(scenario.depart[i, d + 1]) if d + 1 < D else H
            on = np.flatnonzero(run.powers[i, start:stop] > 0)
            end = start if on.size == 0 else start + int(on[-1]) + 1
            out.append((i, d, end - d * T))
    return out


def stability_stats(run: HorizonRun, scenario: Scenario, full_tol: float = 1e-3
                    ) -> StabilitySummary:
    """Per-class queue statistics, departure fullness and charging completion times."""
    T, D = scenario.grid.slots_per_day, scenario.days
    labels = scenario.class_index
    comp = completion_slots(run, scenario) if scenario.arrive is not None else []
    departs_full = np.zeros((scenario.n_vehicles, D), dtype=bool)
    if scenario.depart is not None:
        for d in range(D):
            idx = d * T + scenario.depart[:, d]
            departs_full[:, d] = run.queues[np.arange(scenario.n_vehicles), idx] <= full_tol
    classes = []
    for ci, name in enumerate(scenario.class_names):
        members = np.flatnonzero(labels == ci)
        q = run.queues[members]
        slots = [s for (i, _, s) in comp if labels[i] == ci]
        classes.append(ClassStats(
            name=name,
            vehicles=int(members.size),
            mean_queue=float(q.mean()) if q.size else math.nan,
            max_queue=float(q.max()) if q.size else math.nan,
            full_departure_fraction=float(departs_full[members].mean()) if members.size else math.nan,
            median_completion_slot=float(np.median(slots)) if slots else math.nan,
            completion_slots=slots,
        ))
    boundary = run.queues[:, ::T]
    cap = scenario.fleet.capacity[:, None]
    drift = float(np.max(np.abs(boundary - boundary[:, :1]) / cap)) if boundary.size else 0.0
    return StabilitySummary(
        classes=classes,
        strictly_feasible=scenario.strictly_feasible,
        epsilon=scenario.epsilon,
        boundary_queues=boundary.T.tolist(),
        max_boundary_drift=drift,
    )
