"""Decentralized PEV charging: online max-weight bisection, offline valley filling, bound checks."""

from .model import NetLoadTrace, SlotGrid, VehicleSpec, VehicleState, queue_update
from .scenario import Scenario, ScenarioConfig, PriorityClass, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "NetLoadTrace",
    "SlotGrid",
    "VehicleSpec",
    "VehicleState",
    "queue_update",
    "Scenario",
    "ScenarioConfig",
    "PriorityClass",
    "generate_scenario",
]
