"""Seeded stochastic scenarios: base load, driving patterns, consumption.

A scenario is fully materialised up front so every algorithm sees the same
realisation of availability, consumption and load.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDrivingWindow,
    InputError,
    MalformedProfile,
    ResampleLimitExceeded,
    WrongLength,
)
from .model import FleetArrays, NetLoadTrace, SlotGrid, VehicleSpec

VEHICLES_PER_HOUSEHOLD = 1.8
RESAMPLE_LIMIT = 1000
DEFAULT_PROFILE = "residential_96.csv"


@dataclass(frozen=True)
class DrivingPattern:
    """One day away from home: unavailable on ``[depart_slot, arrive_slot)``."""

    depart_slot: int
    arrive_slot: int

    def availability(self, slots_per_day: int) -> np.ndarray:
        chi = np.ones(slots_per_day, dtype=bool)
        chi[self.depart_slot:self.arrive_slot] = False
        return chi

    @property
    def driving_slots(self) -> int:
        return self.arrive_slot - self.depart_slot


@dataclass(frozen=True)
class PriorityClass:
    name: str
    fraction: float
    c_offset: float


@dataclass(frozen=True)
class ScenarioConfig:
    households: int = 100
    penetration: float = 0.3
    days: int = 1
    seed: int = 0
    slots_per_day: int = 96
    base_profile: str | None = None
    avg_household_kw: float = 1.3
    capacity: float = 16.0
    p_max: float = 1.92
    eta: float = 0.9
    daily_kwh: float = 8.75
    classes: tuple[PriorityClass, ...] = (PriorityClass("uniform", 1.0, 577.0),)
    initial_queue: float | None = None
    forecast_mape: float = 0.1
    min_margin: float = 1e-3
    depart_hour: float = 7.0
    depart_std: float = 1.0
    arrive_hour: float = 17.0
    arrive_std: float = 2.0
    # Spread of distinct per-vehicle offsets added to c_offset; breaks threshold ties.
    c_jitter: float = 0.4

    def __post_init__(self):
        if self.c_jitter < 0:
            raise InputError("c_jitter must be >= 0")
        if self.households < 0:
            raise InputError("households must be >= 0")
        if not 0 <= self.penetration <= 1:
            raise InputError("penetration must be in [0, 1]")
        if not 0 <= self.forecast_mape < 1:
            raise InputError("forecast_mape must be in [0, 1)")
        if self.daily_kwh < 0:
            raise InputError("daily_kwh must be >= 0")
        if not self.classes:
            raise InputError("at least one priority class is required")
        total = sum(c.fraction for c in self.classes)
        if abs(total - 1.0) > 1e-9:
            raise InputError(f"class fractions must sum to 1, got {total}")

    @property
    def fleet_size(self) -> int:
        return fleet_size(self.households, self.penetration)

    @property
    def queue0(self) -> float:
        return self.daily_kwh if self.initial_queue is None else self.initial_queue


@dataclass(frozen=True)
class Scenario:
    grid: SlotGrid
    net_load: NetLoadTrace
    specs: tuple[VehicleSpec, ...]
    availability: np.ndarray  # (N, D*T) bool
    consumption: np.ndarray  # (N, D*T) kWh
    initial_queue: np.ndarray  # (N,) kWh
    seed: int = 0
    households: int = 0
    penetration: float = 0.0
    forecast: NetLoadTrace | None = None
    class_index: np.ndarray | None = None  # (N,) index into class_names
    class_names: tuple[str, ...] = ("uniform",)
    depart: np.ndarray | None = None  # (N, D) slot within day
    arrive: np.ndarray | None = None
    min_margin: float = 1e-3
    fleet: FleetArrays = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n, h = self.n_vehicles, self.grid.horizon
        if len(self.net_load) != h:
            raise WrongLength(f"net load has {len(self.net_load)} slots, expected {h}")
        if self.forecast is not None and len(self.forecast) != h:
            raise WrongLength("forecast length differs from the actual trace")
        avail = np.asarray(self.availability, dtype=bool).reshape(n, h)
        cons = np.asarray(self.consumption, dtype=float).reshape(n, h)
        q0 = np.asarray(self.initial_queue, dtype=float).reshape(n)
        if np.any(cons < 0):
            raise InputError("consumption must be non-negative")
        if np.any(avail & (cons > 0)):
            raise InputError("consumption is only allowed while a vehicle is away")
        cls = (np.zeros(n, dtype=int) if self.class_index is None
               else np.asarray(self.class_index, dtype=int).reshape(n))
        for name, arr in (("availability", avail), ("consumption", cons),
                          ("initial_queue", q0), ("class_index", cls)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "fleet", FleetArrays.from_specs(self.specs))

    @property
    def n_vehicles(self) -> int:
        return len(self.specs)

    @property
    def days(self) -> int:
        return self.grid.days

    def day_slice(self, d: int) -> slice:
        t = self.grid.slots_per_day
        return slice(d * t, (d + 1) * t)

    def strict_margins(self) -> np.ndarray:
        """Per vehicle and day: ``(chargeable energy - consumption) / T``."""
        n, t, dd = self.n_vehicles, self.grid.slots_per_day, self.days
        if n == 0:
            return np.zeros((0, dd))
        avail = self.availability.reshape(n, dd, t).sum(axis=2)
        cons = self.consumption.reshape(n, dd, t).sum(axis=2)
        step = (self.fleet.eta * self.fleet.p_max * self.grid.slot_length)[:, None]
        return (avail * step - cons) / t

    @property
    def epsilon(self) -> float:
        """Largest strict-feasibility margin valid for every vehicle and day."""
        m = self.strict_margins()
        return float(m.min()) if m.size else math.inf

    @property
    def strictly_feasible(self) -> bool:
        return self.epsilon >= self.min_margin

    def with_net_load(self, values, forecast: bool = False) -> "Scenario":
        return replace(self, net_load=NetLoadTrace(values, forecast=forecast))

    def subset(self, vehicles) -> "Scenario":
        idx = np.asarray(vehicles, dtype=int)
        return replace(
            self,
            specs=tuple(self.specs[i] for i in idx),
            availability=self.availability[idx],
            consumption=self.consumption[idx],
            initial_queue=self.initial_queue[idx],
            class_index=self.class_index[idx],
            depart=None if self.depart is None else self.depart[idx],
            arrive=None if self.arrive is None else self.arrive[idx],
        )


def fleet_size(households: int, penetration: float) -> int:
    # Half-up rounding; Python's round() would send 0.5 to even.
    return int(math.floor(households * VEHICLES_PER_HOUSEHOLD * penetration + 0.5))


def sample_driving_pattern(
    rng,
    grid: SlotGrid,
    depart_hour: float = 7.0,
    depart_std: float = 1.0,
    arrive_hour: float = 17.0,
    arrive_std: float = 2.0,
) -> DrivingPattern:
    """Draw Gaussian departure/arrival times, rejecting pairs that leave the day."""
    t = grid.slots_per_day
    for _ in range(RESAMPLE_LIMIT):
        depart = grid.slot_of(rng.normal(depart_hour, depart_std))
        arrive = grid.slot_of(rng.normal(arrive_hour, arrive_std))
        if 0 < depart < arrive < t:
            return DrivingPattern(depart, arrive)
    raise ResampleLimitExceeded(
        f"no valid driving pattern after {RESAMPLE_LIMIT} draws on a {t}-slot day"
    )


def build_consumption(pattern: DrivingPattern, daily_kwh: float, grid: SlotGrid) -> np.ndarray:
    """Spread the daily consumption evenly over the driving slots."""
    k = pattern.driving_slots
    if k <= 0:
        raise EmptyDrivingWindow(f"empty driving window {pattern}")
    if daily_kwh < 0:
        raise InputError("daily consumption must be >= 0")
    out = np.zeros(grid.slots_per_day)
    per = daily_kwh / k
    out[pattern.depart_slot:pattern.arrive_slot] = per
    # Last slot absorbs rounding so the day sums (as numpy sums) to daily_kwh exactly.
    last = pattern.arrive_slot - 1
    for _ in range(4):
        err = daily_kwh - out.sum()
        if err == 0:
            break
        out[last] += err
    return out


def read_profile_shape(path) -> np.ndarray:
    """Read one value per line/row; ``#`` comments and one header row are skipped."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedProfile(f"cannot read base-load profile {path}: {exc}") from exc
    values = []
    rows = [r for r in csv.reader(text.splitlines()) if r and not r[0].lstrip().startswith("#")]
    for lineno, row in enumerate(rows, start=1):
        cell = row[-1].strip()
        try:
            values.append(float(cell))
        except ValueError:
            if lineno == 1 and not values:
                continue
            raise MalformedProfile(f"{path}: non-numeric value {cell!r} in row {lineno}") from None
    if not values:
        raise MalformedProfile(f"{path}: no values")
    arr = np.array(values)
    if not np.all(np.isfinite(arr)):
        raise MalformedProfile(f"{path}: non-finite values")
    return arr


def default_profile_path() -> Path:
    return Path(str(resources.files("pevcharge.data") / DEFAULT_PROFILE))


def load_base_profile(
    path, households: int, avg_household_kw: float = 1.3, grid: SlotGrid | None = None
) -> NetLoadTrace:
    """Scale a daily shape so its mean is ``households * avg_household_kw``, tiled to D days."""
    grid = grid or SlotGrid()
    shape = read_profile_shape(path)
    t = grid.slots_per_day
    if shape.size % t != 0:
        raise WrongLength(f"profile has {shape.size} values, not a multiple of {t}")
    mean = shape.mean()
    if not mean > 0:
        raise MalformedProfile("profile mean must be positive")
    scaled = shape * (households * avg_household_kw / mean)
    reps = math.ceil(grid.horizon / scaled.size)
    return NetLoadTrace(np.tile(scaled, reps)[: grid.horizon])


def perturb_forecast(trace: NetLoadTrace, rng, mape_bound: float) -> NetLoadTrace:
    """Multiply each slot by ``1 + e`` with ``e`` uniform in ``[-mape_bound, mape_bound]``."""
    if not 0 <= mape_bound < 1:
        raise InputError("mape_bound must be in [0, 1)")
    noise = rng.uniform(-mape_bound, mape_bound, size=len(trace))
    return NetLoadTrace(trace.values * (1.0 + noise), forecast=True)


def _assign_classes(rng, n: int, classes) -> np.ndarray:
    counts = [int(math.floor(c.fraction * n + 0.5)) for c in classes[:-1]]
    counts.append(n - sum(counts))
    if counts[-1] < 0:
        raise InputError("class fractions round to more vehicles than the fleet has")
    labels = np.repeat(np.arange(len(classes)), counts)
    return labels[rng.permutation(n)]


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Materialise a scenario; identical config and seed give identical output."""
    grid = SlotGrid.from_slots(config.slots_per_day, config.days)
    rng = np.random.default_rng(config.seed)
    profile = config.base_profile or default_profile_path()
    net = load_base_profile(profile, config.households, config.avg_household_kw, grid)
    forecast = perturb_forecast(net, rng, config.forecast_mape)

    n, t, dd = config.fleet_size, grid.slots_per_day, grid.days
    labels = _assign_classes(rng, n, config.classes)
    avail = np.ones((n, grid.horizon), dtype=bool)
    cons = np.zeros((n, grid.horizon))
    depart = np.zeros((n, dd), dtype=int)
    arrive = np.zeros((n, dd), dtype=int)
    for d in range(dd):
        for i in range(n):
            pat = sample_driving_pattern(
                rng, grid, config.depart_hour, config.depart_std,
                config.arrive_hour, config.arrive_std,
            )
            sl = slice(d * t, (d + 1) * t)
            avail[i, sl] = pat.availability(t)
            cons[i, sl] = build_consumption(pat, config.daily_kwh, grid)
            depart[i, d], arrive[i, d] = pat.depart_slot, pat.arrive_slot

    a_max = cons.max(axis=1) if n else np.zeros(0)
    jitter = rng.permutation(n) / max(n, 1) * config.c_jitter
    specs = tuple(
        VehicleSpec(config.capacity, config.p_max, config.eta,
                    config.classes[labels[i]].c_offset + float(jitter[i]), float(a_max[i]))
        for i in range(n)
    )
    return Scenario(
        grid=grid,
        net_load=net,
        specs=specs,
        availability=avail,
        consumption=cons,
        initial_queue=np.full(n, config.queue0),
        seed=config.seed,
        households=config.households,
        penetration=config.penetration,
        forecast=forecast,
        class_index=labels,
        class_names=tuple(c.name for c in config.classes),
        depart=depart,
        arrive=arrive,
        min_margin=config.min_margin,
    )
