"""Domain types and per-slot battery queue dynamics.

Units are fixed across the package: power in kW, energy in kWh, time in
hours. The energy queue of a vehicle is the energy still needed to refill
its battery, ``(1 - SoC) * capacity``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ChargeExceedsQueue, InputError, NegativeInput

# Absolute slack (kWh) for the "cannot charge past full" check.
ENERGY_TOL = 1e-9


@dataclass(frozen=True)
class VehicleSpec:
    capacity: float = 16.0
    p_max: float = 1.92
    eta: float = 0.9
    c_offset: float = 0.0
    a_max: float = 0.0

    def __post_init__(self):
        if not self.capacity > 0:
            raise InputError(f"capacity must be > 0, got {self.capacity}")
        if not 0 < self.eta <= 1:
            raise InputError(f"eta must be in (0, 1], got {self.eta}")
        if not self.p_max > 0:
            raise InputError(f"p_max must be > 0, got {self.p_max}")
        if self.c_offset < 0:
            raise InputError(f"c_offset must be >= 0, got {self.c_offset}")
        if self.a_max < 0:
            raise InputError(f"a_max must be >= 0, got {self.a_max}")

    def slot_energy(self, dt: float) -> float:
        """Energy stored by one full-power slot, ``eta * p_max * dt``."""
        return self.eta * self.p_max * dt


@dataclass(frozen=True)
class VehicleState:
    queue: float

    def soc(self, spec: VehicleSpec) -> float:
        return 1.0 - self.queue / spec.capacity


@dataclass(frozen=True)
class SlotGrid:
    slots_per_day: int = 96
    slot_length: float = 0.25
    days: int = 1

    def __post_init__(self):
        if self.slots_per_day < 1:
            raise InputError("slots_per_day must be >= 1")
        if not self.slot_length > 0:
            raise InputError("slot_length must be > 0")
        if abs(self.slots_per_day * self.slot_length - 24.0) > 1e-9:
            raise InputError(
                f"slots_per_day * slot_length must be 24 h, got "
                f"{self.slots_per_day * self.slot_length}"
            )
        if self.days < 1:
            raise InputError("days must be >= 1")

    @classmethod
    def from_slots(cls, slots_per_day: int = 96, days: int = 1) -> "SlotGrid":
        return cls(slots_per_day, 24.0 / slots_per_day, days)

    @property
    def horizon(self) -> int:
        return self.slots_per_day * self.days

    def slot_of(self, hours: float) -> int:
        """Nearest slot boundary to a clock time; ties go to the earlier slot."""
        return int(np.ceil(hours / self.slot_length - 0.5))


@dataclass(frozen=True)
class NetLoadTrace:
    """Net base load per slot (negative entries are net generation)."""

    values: np.ndarray
    forecast: bool = False
    s_max: float = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise InputError("net load trace must be a non-empty 1-D sequence")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "s_max", float(vals.max()))

    def __len__(self) -> int:
        return self.values.size

    @property
    def s_min(self) -> float:
        return float(self.values.min())


def queue_update(
    state: VehicleState, spec: VehicleSpec, p: float, a: float, dt: float
) -> VehicleState:
    """Advance one vehicle's energy queue by one slot.

    Charging ``p`` removes ``eta * p * dt`` from the queue; driving adds the
    consumption ``a``, clamped so the queue never exceeds the battery capacity.
    """
    if p < 0 or a < 0:
        raise NegativeInput(f"power and consumption must be >= 0 (p={p}, a={a})")
    if p > spec.p_max * (1 + 1e-12):
        raise InputError(f"power {p} exceeds p_max {spec.p_max}")
    if p > 0 and a > 0:
        raise InputError("a vehicle cannot charge and drive in the same slot")
    charged = spec.eta * p * dt
    if charged > state.queue + ENERGY_TOL:
        raise ChargeExceedsQueue(
            f"charging {charged:.6g} kWh into a queue of {state.queue:.6g} kWh"
        )
    after = max(state.queue - charged, 0.0)
    return VehicleState(after + min(a, spec.capacity - after))


def avg_power_when_filling(state: VehicleState, spec: VehicleSpec, dt: float) -> float:
    """Average power of a slot in which the battery fills before the slot ends."""
    return state.queue / (spec.eta * dt)


@dataclass(frozen=True)
class FleetArrays:
    """Column view of a list of specs, for vectorised per-slot work."""

    capacity: np.ndarray
    p_max: np.ndarray
    eta: np.ndarray
    c_offset: np.ndarray
    a_max: np.ndarray

    @classmethod
    def from_specs(cls, specs) -> "FleetArrays":
        specs = list(specs)

        def col(name):
            return np.array([getattr(s, name) for s in specs], dtype=float)

        return cls(col("capacity"), col("p_max"), col("eta"), col("c_offset"), col("a_max"))

    def __len__(self) -> int:
        return self.capacity.size


def queue_update_many(
    queues: np.ndarray, fleet: FleetArrays, p: np.ndarray, a: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised `queue_update`; returns ``(new_queues, applied_consumption)``."""
    charged = fleet.eta * p * dt
    over = charged - queues
    if np.any(over > ENERGY_TOL):
        i = int(np.argmax(over))
        raise ChargeExceedsQueue(
            f"vehicle {i}: charging {charged[i]:.6g} kWh into a queue of {queues[i]:.6g} kWh"
        )
    if np.any((p > 0) & (a > 0)):
        raise InputError("a vehicle cannot charge and drive in the same slot")
    after = np.maximum(queues - charged, 0.0)
    applied = np.minimum(a, fleet.capacity - after)
    return after + applied, applied
