"""Deterministic virtual tank: sensors, cameras, feeder, pH pump, and fish growth."""

from .scenario import FeederSpec, Scenario, SensorSpec, load_scenario
from .sim import FishIndividual, VirtualTank

__all__ = [
    "FeederSpec",
    "Scenario",
    "SensorSpec",
    "load_scenario",
    "FishIndividual",
    "VirtualTank",
]
