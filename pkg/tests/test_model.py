import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pevcharge.errors import ChargeExceedsQueue, InputError, NegativeInput
from pevcharge.model import (
    ENERGY_TOL,
    FleetArrays,
    NetLoadTrace,
    SlotGrid,
    VehicleSpec,
    VehicleState,
    avg_power_when_filling,
    queue_update,
    queue_update_many,
)

SPEC = VehicleSpec(capacity=16.0, p_max=1.92, eta=0.9)


def test_charging_full_slot_reduces_queue():
    out = queue_update(VehicleState(10.0), SPEC, 1.92, 0.0, 0.25)
    assert out.queue == pytest.approx(10.0 - 0.9 * 1.92 * 0.25, abs=1e-12)
    assert out.queue == pytest.approx(9.568, abs=1e-12)


def test_idle_slot_keeps_queue():
    assert queue_update(VehicleState(5.0), SPEC, 0.0, 0.0, 0.25).queue == 5.0


def test_overcharging_is_rejected():
    with pytest.raises(ChargeExceedsQueue):
        queue_update(VehicleState(0.3), SPEC, 1.92, 0.0, 0.25)


def test_charge_equal_to_queue_within_tolerance_is_allowed():
    q = 0.9 * 1.92 * 0.25 - ENERGY_TOL / 2
    assert queue_update(VehicleState(q), SPEC, 1.92, 0.0, 0.25).queue == 0.0


def test_negative_inputs_rejected():
    with pytest.raises(NegativeInput):
        queue_update(VehicleState(5.0), SPEC, -0.1, 0.0, 0.25)
    with pytest.raises(NegativeInput):
        queue_update(VehicleState(5.0), SPEC, 0.0, -0.1, 0.25)


def test_charge_and_drive_in_one_slot_rejected():
    with pytest.raises(InputError):
        queue_update(VehicleState(5.0), SPEC, 1.0, 0.2, 0.25)


def test_power_above_rating_rejected():
    with pytest.raises(InputError):
        queue_update(VehicleState(5.0), SPEC, 2.0, 0.0, 0.25)


def test_consumption_clamped_at_capacity():
    out = queue_update(VehicleState(15.9), SPEC, 0.0, 0.5, 0.25)
    assert out.queue == 16.0


def test_avg_power_when_filling_examples():
    assert avg_power_when_filling(VehicleState(0.216), SPEC, 0.25) == pytest.approx(0.96)
    assert avg_power_when_filling(VehicleState(0.0), SPEC, 0.25) == 0.0
    assert avg_power_when_filling(VehicleState(0.432), SPEC, 0.25) == pytest.approx(1.92)


def test_soc_definition():
    assert VehicleState(4.0).soc(SPEC) == pytest.approx(0.75)


@pytest.mark.parametrize("kwargs", [
    dict(capacity=0.0), dict(p_max=0.0), dict(eta=0.0), dict(eta=1.1),
    dict(c_offset=-1.0), dict(a_max=-0.1),
])
def test_spec_validation(kwargs):
    with pytest.raises(InputError):
        VehicleSpec(**kwargs)


def test_slot_grid_invariants():
    g = SlotGrid.from_slots(96, 3)
    assert g.slot_length == 0.25 and g.horizon == 288
    with pytest.raises(InputError):
        SlotGrid(slots_per_day=96, slot_length=0.5)
    with pytest.raises(InputError):
        SlotGrid.from_slots(96, 0)


def test_slot_rounding_nearest_ties_earlier():
    g = SlotGrid()
    assert g.slot_of(6.5) == 26
    assert g.slot_of(6.5 + 0.125) == 26  # exactly half a slot: earlier slot
    assert g.slot_of(6.5 + 0.126) == 27
    assert g.slot_of(7.0) == 28


def test_net_load_trace_max_and_negative_values():
    tr = NetLoadTrace([1.0, -2.0, 3.5])
    assert tr.s_max == 3.5 and tr.s_min == -2.0
    with pytest.raises(ValueError):
        tr.values[0] = 9.0


queue_st = st.floats(0, 16)


@settings(max_examples=300, deadline=None)
@given(q=queue_st, frac=st.floats(0, 1), a=st.floats(0, 5), drive=st.booleans())
def test_queue_stays_in_range_and_conserves_energy(q, frac, a, drive):
    dt = 0.25
    p = 0.0 if drive else min(SPEC.p_max, q / (SPEC.eta * dt)) * frac
    a = a if drive else 0.0
    out = queue_update(VehicleState(q), SPEC, p, a, dt).queue
    assert 0.0 <= out <= SPEC.capacity
    after_charge = q - SPEC.eta * p * dt
    applied = min(a, SPEC.capacity - after_charge)
    assert math.isclose(out - q, applied - SPEC.eta * p * dt, abs_tol=1e-12)


def test_vectorised_update_matches_scalar():
    rng = np.random.default_rng(3)
    specs = [VehicleSpec(16.0, 1.92, 0.9), VehicleSpec(12.0, 3.3, 0.85), VehicleSpec(20.0, 1.0, 1.0)]
    fleet = FleetArrays.from_specs(specs)
    for _ in range(50):
        q = rng.uniform(0, 10, 3)
        drive = rng.random(3) < 0.5
        p = np.where(drive, 0.0, np.minimum(fleet.p_max, q / (fleet.eta * 0.25)) * rng.random(3))
        a = np.where(drive, rng.uniform(0, 8, 3), 0.0)
        new, applied = queue_update_many(q, fleet, p, a, 0.25)
        for i, s in enumerate(specs):
            assert new[i] == pytest.approx(queue_update(VehicleState(q[i]), s, p[i], a[i], 0.25).queue,
                                           abs=1e-12)
        assert np.allclose(new - q, applied - fleet.eta * p * 0.25)
