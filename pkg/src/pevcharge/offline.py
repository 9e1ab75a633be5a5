"""Day-ahead benchmark solvers and small-instance oracles.

The static problem minimises the mean squared total load over one day,
subject to per-vehicle power boxes, availability, a cumulative "never charge
past full / never run empty" tube, and the daily energy balance. The feasible
set is a product of per-vehicle polyhedra, so the solver sweeps vehicles in
Gauss-Seidel order and replaces each vehicle's schedule with the exact
Euclidean projection of ``-(load seen from the others)`` onto its polyhedron.
Each sweep can only lower the objective.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, NotConverged, TooLarge
from .scenario import Scenario
from .schedule import ChargingSchedule

log = logging.getLogger(__name__)

_TIE = 1e-12


@dataclass(frozen=True)
class SolverSettings:
    max_iters: int = 500
    tol: float = 1e-10
    feas_tol: float = 1e-9
    raise_on_stall: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


@dataclass(frozen=True)
class VehicleTube:
    """Feasible set of one vehicle for one day, in power units (kW per slot).

    ``lo[m] <= sum(x[:m+1]) <= hi[m]`` and ``0 <= x <= ub``; ``lo[-1] == hi[-1]``
    pins the day's total.
    """

    ub: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def vehicle_tube(ub, consumption, q0: float, capacity: float, eta: float, dt: float,
                 enforce_capacity: bool = True) -> VehicleTube:
    """Translate queue bounds into cumulative-power bounds for one day."""
    scale = eta * dt
    cum_a = np.cumsum(consumption)
    hi = (q0 + cum_a) / scale
    lo = np.maximum((q0 + cum_a - capacity) / scale, 0.0) if enforce_capacity else np.zeros_like(hi)
    total = cum_a[-1] / scale
    hi = np.minimum(hi, total)
    lo = np.minimum(lo, total)
    lo[-1] = hi[-1] = total
    return VehicleTube(np.asarray(ub, dtype=float), lo, hi)


def reachable_check(tube: VehicleTube) -> int | None:
    """Return the first slot whose cumulative bounds cannot be met, or None."""
    rmin = rmax = 0.0
    for m in range(tube.ub.size):
        rmin = max(rmin, tube.lo[m])
        rmax = min(rmax + tube.ub[m], tube.hi[m])
        if rmin > rmax + 1e-9 * max(1.0, abs(rmax)):
            return m
    return None


def _levels(z, ub, start_total, lo, hi):
    """For each prefix end, the level interval keeping the prefix inside its bounds.

    With ``x = clip(z + level, 0, ub)`` the cumulative sums are nondecreasing,
    piecewise-linear functions of the level; this evaluates them on all
    breakpoints and inverts row by row.
    """
    bps = np.unique(np.concatenate([-z, ub - z]))
    g = np.clip(z[:, None] + bps[None, :], 0.0, ub[:, None])
    f = start_total + np.cumsum(g, axis=0)  # (slots, breakpoints)
    k = bps.size
    rows = np.arange(f.shape[0])

    # a: smallest level with F >= lo
    ge = f >= lo[:, None] - _TIE
    first = np.where(ge.any(axis=1), ge.argmax(axis=1), k)
    a = np.full(f.shape[0], np.inf)
    a[first == 0] = -np.inf
    mid = (first > 0) & (first < k)
    j = first[mid]
    r = rows[mid]
    f0, f1 = f[r, j - 1], f[r, j]
    b0, b1 = bps[j - 1], bps[j]
    a[mid] = b0 + (lo[mid] - f0) / np.where(f1 > f0, f1 - f0, 1.0) * (b1 - b0)

    # b: largest level with F <= hi
    le = f <= hi[:, None] + _TIE
    last = np.where(le.any(axis=1), k - 1 - le[:, ::-1].argmax(axis=1), -1)
    b = np.full(f.shape[0], -np.inf)
    b[last == k - 1] = np.inf
    mid = (last >= 0) & (last < k - 1)
    j = last[mid]
    r = rows[mid]
    f0, f1 = f[r, j], f[r, j + 1]
    b0, b1 = bps[j], bps[j + 1]
    b[mid] = b0 + (hi[mid] - f0) / np.where(f1 > f0, f1 - f0, 1.0) * (b1 - b0)
    return a, b


def project_tube(z, tube: VehicleTube) -> np.ndarray:
    """Euclidean projection of ``z`` onto a vehicle's feasible set.

    The solution is ``clip(z + level, 0, ub)`` with a piecewise-constant level
    that only changes after a slot where a cumulative bound is tight. Segments
    are found greedily, taut-string style.
    """
    z = np.asarray(z, dtype=float)
    ub, lo, hi = tube.ub, tube.lo, tube.hi
    T = z.size
    bad = reachable_check(tube)
    if bad is not None:
        raise Infeasible(f"cumulative energy bounds cannot be met by slot {bad}")
    x = np.zeros(T)
    s, total = 0, 0.0
    while s < T:
        a, b = _levels(z[s:], ub[s:], total, lo[s:], hi[s:])
        if np.any(a > b + 1e-9):
            e = int(np.argmax(a > b + 1e-9))
            raise Infeasible(f"cumulative bounds cannot be met at slot {s + e}")
        amax = np.maximum.accumulate(a)
        bmin = np.minimum.accumulate(b)
        broken = amax > bmin + 1e-12 * (1.0 + np.abs(bmin))
        if not broken.any():
            A, B = amax[-1], bmin[-1]
            if np.isfinite(A) and np.isfinite(B):
                level = 0.5 * (A + B)
            elif np.isfinite(A):
                level = A
            elif np.isfinite(B):
                level = B
            else:
                level = 0.0
            x[s:] = np.clip(z[s:] + level, 0.0, ub[s:])
            break
        e = int(np.argmax(broken))
        if a[e] > bmin[e - 1]:
            # the upper bound that set bmin is tight; the level rises after it
            level = bmin[e - 1]
            end = int(np.flatnonzero(b[:e] <= level + 1e-12 * (1 + abs(level)))[-1])
            target = hi[s + end]
        else:
            level = amax[e - 1]
            end = int(np.flatnonzero(a[:e] >= level - 1e-12 * (1 + abs(level)))[-1])
            target = lo[s + end]
        seg = np.clip(z[s:s + end + 1] + level, 0.0, ub[s:s + end + 1])
        # Pin the prefix to the tight bound exactly (interpolation noise only).
        err = target - (total + seg.sum())
        if err != 0.0:
            room = ub[s:s + end + 1] - seg if err > 0 else seg
            if room.sum() > 0:
                seg = seg + err * room / room.sum()
        x[s:s + end + 1] = seg
        total = total + seg.sum()
        s += end + 1
    return x


def day_tubes(scenario: Scenario, day: int, enforce_capacity: bool = True):
    sl = scenario.day_slice(day)
    fl, dt = scenario.fleet, scenario.grid.slot_length
    ub = np.where(scenario.availability[:, sl], fl.p_max[:, None], 0.0)
    tubes = []
    for i in range(scenario.n_vehicles):
        tubes.append(vehicle_tube(ub[i], scenario.consumption[i, sl], scenario.initial_queue[i],
                                  fl.capacity[i], fl.eta[i], dt, enforce_capacity))
    return tubes


@dataclass
class DayResult:
    powers: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def solve_day(net_load: np.ndarray, tubes, settings: SolverSettings = SolverSettings(),
              vehicle_offset: int = 0, day: int | None = None) -> DayResult:
    """Block-coordinate valley filling for one day."""
    s = np.asarray(net_load, dtype=float)
    n, T = len(tubes), s.size
    x = np.zeros((n, T))
    for i, tube in enumerate(tubes):
        bad = reachable_check(tube)
        if bad is not None:
            raise Infeasible(
                f"vehicle {vehicle_offset + i} cannot meet its energy bounds by slot {bad}",
                vehicle=vehicle_offset + i, day=day)
    y = s.copy()
    history = [float(np.mean(y ** 2))]
    converged = n == 0
    it = 0
    for it in range(1, settings.max_iters + 1):
        moved = 0.0
        for i, tube in enumerate(tubes):
            y -= x[i]
            try:
                new = project_tube(-y, tube)
            except Infeasible as exc:
                raise Infeasible(f"vehicle {vehicle_offset + i}: {exc}",
                                 vehicle=vehicle_offset + i, day=day) from exc
            moved = max(moved, float(np.abs(new - x[i]).max()))
            x[i] = new
            y += new
        obj = float(np.mean(y ** 2))
        prev = history[-1]
        history.append(obj)
        if it > 1 and prev - obj <= settings.tol * max(1.0, abs(prev)) and moved <= 1e-6:
            converged = True
            break
    if not converged:
        msg = f"day {day}: no convergence after {settings.max_iters} sweeps"
        if settings.raise_on_stall:
            raise NotConverged(msg, best=x)
        log.warning(msg)
    return DayResult(x, history[-1], it, converged, history)


def solve_static(scenario: Scenario, net_load=None, settings: SolverSettings = SolverSettings(),
                 provenance: str = "static-optimal", enforce_capacity: bool = True
                 ) -> ChargingSchedule:
    """Solve each day independently against ``net_load`` (default: the actual trace)."""
    s = scenario.net_load.values if net_load is None else np.asarray(net_load, dtype=float)
    n, h = scenario.n_vehicles, scenario.grid.horizon
    powers = np.zeros((n, h))
    objectives, sweeps, ok = [], [], []
    for d in range(scenario.days):
        sl = scenario.day_slice(d)
        res = solve_day(s[sl], day_tubes(scenario, d, enforce_capacity), settings, day=d)
        powers[:, sl] = res.powers
        objectives.append(res.objective)
        sweeps.append(res.iterations)
        ok.append(res.converged)
    info = {"objective_by_day": objectives, "sweeps": sweeps, "converged": all(ok)}
    return ChargingSchedule(powers, provenance, info)


def solve_static_optimal(scenario: Scenario, settings: SolverSettings = SolverSettings()
                         ) -> ChargingSchedule:
    """Perfect-knowledge benchmark: the day's true net load and driving data."""
    return solve_static(scenario, None, settings, "static-optimal")


def solve_static_forecast(scenario: Scenario, forecast=None,
                          settings: SolverSettings = SolverSettings()) -> ChargingSchedule:
    """Plan against a forecast net load while knowing the true driving data."""
    if forecast is None:
        if scenario.forecast is None:
            raise ValueError("scenario carries no forecast trace")
        forecast = scenario.forecast
    values = getattr(forecast, "values", forecast)
    if len(values) != scenario.grid.horizon:
        raise ValueError("forecast length differs from the scenario horizon")
    return solve_static(scenario, values, settings, "static-forecast")


# ---------------------------------------------------------------- oracles

def max_weight_oracle(queues, fleet, available, s_net: float, beta: float, dt: float,
                      ternary_iters: int = 100):
    """Exhaustive maximiser of the per-slot queue-weighted objective (N <= 8).

    Every on/off pattern is tried, and in each pattern every single vehicle is
    also allowed a continuous power found by ternary search. Returns
    ``(powers, objective)``.
    """
    from .online import _as_fleet

    fleet = _as_fleet(fleet)
    q = np.asarray(queues, dtype=float)
    n = q.size
    if n > 8:
        raise TooLarge(f"max_weight_oracle handles at most 8 vehicles, got {n}")
    ub = np.where(np.asarray(available, dtype=bool),
                  np.minimum(fleet.p_max, q / (fleet.eta * dt)), 0.0)
    w = (q + fleet.c_offset) * fleet.eta * dt

    pats = np.array(list(itertools.product((0.0, 1.0), repeat=n))).reshape(-1, n)
    base = pats * ub  # (2^n, n)

    def objective(p):
        return p @ w - beta * (s_net + p.sum(axis=-1)) ** 2

    best_val = objective(base)
    best_p = base.copy()
    for j in range(n):
        others = base.copy()
        others[:, j] = 0.0
        lo = np.zeros(len(others))
        hi = np.full(len(others), ub[j])
        for _ in range(ternary_iters):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            p1, p2 = others.copy(), others.copy()
            p1[:, j], p2[:, j] = m1, m2
            left = objective(p1) < objective(p2)
            lo = np.where(left, m1, lo)
            hi = np.where(left, hi, m2)
        cand = others.copy()
        cand[:, j] = 0.5 * (lo + hi)
        val = objective(cand)
        better = val > best_val
        best_val = np.where(better, val, best_val)
        best_p[better] = cand[better]
    k = int(np.argmax(best_val))
    return best_p[k], float(best_val[k])


def _grid_schedules(tube: VehicleTube, step: float) -> np.ndarray:
    """All grid schedules (multiples of ``step``) inside a vehicle tube."""
    T = tube.ub.size
    levels = [np.arange(0, int(np.floor(u / step + 1e-9)) + 1) for u in tube.ub]
    total = int(round(tube.hi[-1] / step))
    if abs(total * step - tube.hi[-1]) > 1e-9:
        raise ValueError(f"daily energy {tube.hi[-1]} is not on the {step} grid")
    rows = np.zeros((1, 0), dtype=int)
    for m in range(T):
        rows = np.repeat(rows, len(levels[m]), axis=0)
        col = np.tile(levels[m], len(rows) // len(levels[m]))
        rows = np.column_stack([rows, col])
        c = rows.sum(axis=1) * step
        keep = (c <= tube.hi[m] + 1e-9) & (c >= tube.lo[m] - 1e-9)
        if m == T - 1:
            keep &= rows.sum(axis=1) == total
        rows = rows[keep]
    return rows * step


def brute_force_schedule_oracle(scenario: Scenario, step: float = 0.01,
                                enforce_capacity: bool = True) -> ChargingSchedule:
    """Exhaustive grid search for tiny instances (N <= 2, T <= 4, one day)."""
    n, T = scenario.n_vehicles, scenario.grid.slots_per_day
    if n > 2 or T > 4 or scenario.days != 1:
        raise TooLarge("brute force handles N <= 2 vehicles and T <= 4 slots, one day")
    s = scenario.net_load.values
    cands = []
    for i, tube in enumerate(day_tubes(scenario, 0, enforce_capacity)):
        c = _grid_schedules(tube, step)
        if len(c) == 0:
            raise Infeasible(f"vehicle {i} has no feasible grid schedule", vehicle=i, day=0)
        cands.append(c)
    if n == 0:
        return ChargingSchedule(np.zeros((0, T)), "oracle", {"objective": float(np.mean(s ** 2))})
    if n == 1:
        vals = ((s + cands[0]) ** 2).mean(axis=1)
        k = int(np.argmin(vals))
        return ChargingSchedule(cands[0][k][None, :], "oracle", {"objective": float(vals[k])})
    # ||s + x1 + x2||^2 = ||s + x1||^2 + ||x2||^2 + 2 (s + x1) . x2
    a, b = cands
    sa = s + a
    base_a = (sa ** 2).sum(axis=1)
    base_b = (b ** 2).sum(axis=1)
    best, arg = np.inf, (0, 0)
    chunk = max(1, 2_000_000 // max(1, len(b)))
    for start in range(0, len(a), chunk):
        cross = 2.0 * sa[start:start + chunk] @ b.T + base_b[None, :]
        tot = cross + base_a[start:start + chunk, None]
        k = np.unravel_index(np.argmin(tot), tot.shape)
        if tot[k] < best:
            best, arg = float(tot[k]), (start + k[0], k[1])
    powers = np.vstack([a[arg[0]], b[arg[1]]])
    return ChargingSchedule(powers, "oracle", {"objective": best / T})
