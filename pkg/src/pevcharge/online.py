"""Online decentralized charging.

Each slot the aggregator bisects on a scalar charging reference ``uref``.
Vehicles answer with on-off charging decisions from their own energy queue,
and the aggregator moves the bracket according to whether ``uref`` is above
``2 * beta * (net load + total charging)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BracketInvalid, InputError, SlotError
from .model import FleetArrays, VehicleSpec, queue_update_many
from .scenario import Scenario
from .schedule import ChargingSchedule, HorizonRun

log = logging.getLogger(__name__)

DEFAULT_BRACKET_BITS = 20


@dataclass(frozen=True)
class AggregatorParams:
    """Bisection settings; ``None`` fields are filled by `default_params`."""

    beta: float
    uref_min: float | None = None
    uref_max: float | None = None
    eps_prime: float | None = None
    max_iters: int = 64

    def __post_init__(self):
        if not self.beta > 0:
            raise InputError(f"beta must be > 0, got {self.beta}")
        if (self.uref_min is not None and self.uref_max is not None
                and not self.uref_min < self.uref_max):
            raise InputError("uref_min must be < uref_max")
        if self.eps_prime is not None and not self.eps_prime > 0:
            raise InputError("eps_prime must be > 0")

    @property
    def resolved(self) -> bool:
        return None not in (self.uref_min, self.uref_max, self.eps_prime)


def default_params(beta: float, s_min: float, s_max: float, p_max_total: float,
                   **overrides) -> AggregatorParams:
    """Bracket that always contains ``2 * beta * total load``, with 2**-20 resolution."""
    params = AggregatorParams(beta, **overrides)
    lo = params.uref_min
    if lo is None:
        lo = 2.0 * beta * min(0.0, s_min)
    hi = params.uref_max
    if hi is None:
        hi = 2.0 * beta * (max(s_max, 0.0) + p_max_total)
        if hi <= lo:
            hi = lo + 2.0 * beta
    eps = params.eps_prime
    if eps is None:
        eps = (hi - lo) * 2.0 ** -DEFAULT_BRACKET_BITS
    return replace(params, uref_min=lo, uref_max=hi, eps_prime=eps)


def params_for(scenario: Scenario, beta: float, **overrides) -> AggregatorParams:
    return default_params(beta, scenario.net_load.s_min, scenario.net_load.s_max,
                          float(scenario.fleet.p_max.sum()), **overrides)


@dataclass(frozen=True)
class SlotSolution:
    uref: float
    powers: np.ndarray
    total_load: float
    iters: int
    converged: bool = True
    bracket: tuple[float, float] = (math.nan, math.nan)


def local_decision(queue: float, spec: VehicleSpec, uref: float, available: bool,
                   dt: float) -> float:
    """Charge at full power if the queue clears the threshold, else stay off.

    The threshold is ``uref / (eta * dt) - c_offset``; a queue exactly at the
    threshold stays off. A queue smaller than one full slot of charging gets
    the power that empties it within the slot.
    """
    if not available or queue <= uref / (spec.eta * dt) - spec.c_offset:
        return 0.0
    return min(spec.p_max, queue / (spec.eta * dt))


def local_decisions(queues: np.ndarray, fleet: FleetArrays, uref: float,
                    available: np.ndarray, dt: float) -> np.ndarray:
    """Vectorised `local_decision` over a fleet."""
    on = available & (queues > uref / (fleet.eta * dt) - fleet.c_offset)
    return np.where(on, np.minimum(fleet.p_max, queues / (fleet.eta * dt)), 0.0)


def _as_fleet(fleet) -> FleetArrays:
    return fleet if isinstance(fleet, FleetArrays) else FleetArrays.from_specs(fleet)


def solve_slot(s_net: float, queues, fleet, available, params: AggregatorParams,
               dt: float) -> SlotSolution:
    """Run the aggregator bisection for one slot.

    ``params`` must carry a bracket and tolerance (see `default_params`).
    """
    if not params.resolved:
        raise InputError("solve_slot needs a resolved bracket; use default_params()")
    fleet = _as_fleet(fleet)
    queues = np.asarray(queues, dtype=float)
    available = np.asarray(available, dtype=bool)
    beta = params.beta

    def gap(u):
        p = local_decisions(queues, fleet, u, available, dt)
        return u - 2.0 * beta * (s_net + p.sum())

    lo, hi = params.uref_min, params.uref_max
    if gap(lo) > 0 or gap(hi) < 0:
        raise BracketInvalid(
            f"bracket [{lo:.6g}, {hi:.6g}] does not contain the fixed point "
            f"(net load {s_net:.6g})"
        )
    # Midpoint rounding can leave the width a few ulps above eps_prime.
    tol = params.eps_prime + 4 * np.spacing(max(abs(lo), abs(hi)))
    iters = 0
    while hi - lo > tol and iters < params.max_iters:
        mid = 0.5 * (lo + hi)
        iters += 1
        if gap(mid) > 0:
            hi = mid
        else:
            lo = mid
    converged = hi - lo <= tol
    if not converged:
        log.warning("bisection stopped after %d iterations, width %.3g", iters, hi - lo)
    uref = 0.5 * (lo + hi)
    powers = local_decisions(queues, fleet, uref, available, dt)
    return SlotSolution(uref, powers, float(s_net + powers.sum()), iters, converged, (lo, hi))


def max_weight_objective(powers, queues, fleet, s_net: float, beta: float, dt: float) -> float:
    """Queue-weighted charging minus ``beta`` times the squared total load."""
    fleet = _as_fleet(fleet)
    powers = np.asarray(powers, dtype=float)
    weights = (np.asarray(queues) + fleet.c_offset) * fleet.eta * dt
    return float(weights @ powers - beta * (s_net + powers.sum()) ** 2)


def run_horizon(scenario: Scenario, params: AggregatorParams,
                initial_queue=None) -> tuple[ChargingSchedule, HorizonRun]:
    """Simulate the online algorithm over every slot of the scenario."""
    if not params.resolved:
        params = params_for(scenario, params.beta, max_iters=params.max_iters,
                            uref_min=params.uref_min, uref_max=params.uref_max,
                            eps_prime=params.eps_prime)
    if not scenario.strictly_feasible:
        log.warning("scenario is not strictly feasible (margin %.3g)", scenario.epsilon)
    n, h = scenario.n_vehicles, scenario.grid.horizon
    dt = scenario.grid.slot_length
    fleet = scenario.fleet
    queues = np.empty((n, h + 1))
    queues[:, 0] = scenario.initial_queue if initial_queue is None else initial_queue
    powers = np.zeros((n, h))
    applied = np.zeros((n, h))
    uref = np.zeros(h)
    iters = np.zeros(h, dtype=int)
    converged = np.ones(h, dtype=bool)
    s = scenario.net_load.values
    for k in range(h):
        try:
            sol = solve_slot(s[k], queues[:, k], fleet, scenario.availability[:, k], params, dt)
            queues[:, k + 1], applied[:, k] = queue_update_many(
                queues[:, k], fleet, sol.powers, scenario.consumption[:, k], dt)
        except Exception as exc:
            raise SlotError(k, exc) from exc
        powers[:, k] = sol.powers
        uref[k], iters[k], converged[k] = sol.uref, sol.iters, sol.converged
    schedule = ChargingSchedule(powers, "online", {"beta": params.beta})
    run = HorizonRun(schedule, queues, applied, np.array(s), uref, iters, converged)
    return schedule, run
