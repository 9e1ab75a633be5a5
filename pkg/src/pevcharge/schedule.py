"""Charging schedules, their feasibility predicate, and simulated run traces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSchedule, SlotError
from .model import ENERGY_TOL, queue_update_many
from .scenario import Scenario

PROVENANCES = ("online", "static-optimal", "static-forecast", "oracle")


@dataclass(frozen=True)
class ChargingSchedule:
    """Charging power per vehicle and slot, stored as an ``(N, D*T)`` array in kW."""

    powers: np.ndarray
    provenance: str = "online"
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        p = np.array(self.powers, dtype=float, ndmin=2)
        p.setflags(write=False)
        object.__setattr__(self, "powers", p)

    @property
    def aggregate(self) -> np.ndarray:
        return self.powers.sum(axis=0)

    def total_load(self, net_load) -> np.ndarray:
        return np.asarray(net_load, dtype=float) + self.aggregate


def schedule_violations(
    schedule: ChargingSchedule, scenario: Scenario, tol: float = 1e-7,
    require_balance: bool = True,
) -> list[str]:
    """Return human-readable constraint violations (empty list means feasible)."""
    p = schedule.powers
    n, h = scenario.n_vehicles, scenario.grid.horizon
    if p.shape != (n, h):
        return [f"schedule shape {p.shape} != {(n, h)}"]
    out = []
    if n == 0:
        return out
    fl, dt = scenario.fleet, scenario.grid.slot_length
    if np.any(p < -tol):
        out.append(f"negative power, min {p.min():.3g}")
    excess = p - fl.p_max[:, None]
    if np.any(excess > tol):
        out.append(f"power above p_max by {excess.max():.3g}")
    away = np.abs(np.where(scenario.availability, 0.0, p))
    if np.any(away > tol):
        i, k = np.unravel_index(np.argmax(away), away.shape)
        out.append(f"vehicle {i} charges while away at slot {k}")
    # Queue never negative: charged-so-far <= initial + consumed-so-far.
    charged = np.cumsum(fl.eta[:, None] * p * dt, axis=1)
    owed = scenario.initial_queue[:, None] + np.cumsum(scenario.consumption, axis=1)
    if require_balance:
        t = scenario.grid.slots_per_day
        for d in range(scenario.days):
            sl = scenario.day_slice(d)
            c = np.cumsum(fl.eta[:, None] * p[:, sl] * dt, axis=1)
            o = scenario.initial_queue[:, None] + np.cumsum(scenario.consumption[:, sl], axis=1)
            if np.any(c - o > tol):
                out.append(f"day {d}: charging beyond an empty queue by {(c - o).max():.3g} kWh")
            gap = np.abs(c[:, t - 1] - (o[:, t - 1] - scenario.initial_queue))
            if np.any(gap > tol * max(1.0, float(o.max()))):
                i = int(np.argmax(gap))
                out.append(f"day {d}: vehicle {i} energy balance off by {gap[i]:.3g} kWh")
    elif np.any(charged - owed > tol):
        out.append(f"charging beyond an empty queue by {(charged - owed).max():.3g} kWh")
    return out


def assert_feasible(schedule, scenario, tol=1e-7, require_balance=True) -> None:
    bad = schedule_violations(schedule, scenario, tol, require_balance)
    if bad:
        raise InfeasibleSchedule("; ".join(bad))


@dataclass(frozen=True)
class HorizonRun:
    """Everything a horizon simulation produced, slot by slot.

    ``queues`` has ``D*T + 1`` columns: column 0 is the initial queue and
    column ``n`` is the queue after slot ``n``. ``applied`` is the consumption
    actually added after the capacity clamp.
    """

    schedule: ChargingSchedule
    queues: np.ndarray
    applied: np.ndarray
    net_load: np.ndarray
    uref: np.ndarray
    iters: np.ndarray
    converged: np.ndarray

    @property
    def total_load(self) -> np.ndarray:
        return self.net_load + self.schedule.aggregate

    @property
    def powers(self) -> np.ndarray:
        return self.schedule.powers


def simulate_schedule(schedule: ChargingSchedule, scenario: Scenario) -> HorizonRun:
    """Replay a fixed schedule through the queue dynamics."""
    n, h = scenario.n_vehicles, scenario.grid.horizon
    queues = np.empty((n, h + 1))
    applied = np.empty((n, h))
    queues[:, 0] = scenario.initial_queue
    dt = scenario.grid.slot_length
    p = schedule.powers
    for k in range(h):
        try:
            # Solver output may overshoot the queue by rounding noise only.
            pk = np.minimum(p[:, k], queues[:, k] / (scenario.fleet.eta * dt))
            pk = np.where(p[:, k] - pk <= ENERGY_TOL / dt, pk, p[:, k])
            queues[:, k + 1], applied[:, k] = queue_update_many(
                queues[:, k], scenario.fleet, np.maximum(pk, 0.0),
                scenario.consumption[:, k], dt,
            )
        except Exception as exc:
            raise SlotError(k, exc) from exc
    return HorizonRun(
        schedule=schedule,
        queues=queues,
        applied=applied,
        net_load=np.array(scenario.net_load.values),
        uref=np.full(h, np.nan),
        iters=np.zeros(h, dtype=int),
        converged=np.ones(h, dtype=bool),
    )
