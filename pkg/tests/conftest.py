import numpy as np
import pytest

from pevcharge.model import NetLoadTrace, SlotGrid, VehicleSpec
from pevcharge.scenario import Scenario, ScenarioConfig, generate_scenario


def manual_scenario(net, specs, availability, consumption, initial_queue, days=1,
                    forecast=None):
    """Scenario built from explicit arrays, for hand-checked cases."""
    net = np.asarray(net, dtype=float)
    grid = SlotGrid.from_slots(net.size // days, days)
    return Scenario(
        grid=grid,
        net_load=NetLoadTrace(net),
        specs=tuple(specs),
        availability=np.asarray(availability, dtype=bool),
        consumption=np.asarray(consumption, dtype=float),
        initial_queue=np.asarray(initial_queue, dtype=float),
        forecast=None if forecast is None else NetLoadTrace(forecast, forecast=True),
    )


def unit_spec(slots_per_day, p_max=1.0, capacity=100.0, c_offset=0.0, a_max=0.0):
    """A battery whose eta * dt is exactly 1, so energy and power units coincide."""
    dt = 24.0 / slots_per_day
    return VehicleSpec(capacity, p_max, 1.0 / dt, c_offset, a_max)


@pytest.fixture(scope="session")
def desk_day():
    return generate_scenario(ScenarioConfig(days=1, seed=0))


@pytest.fixture(scope="session")
def small_fleet():
    return generate_scenario(ScenarioConfig(households=4, penetration=1.0, days=2, seed=11))
