"""Ride-hailing EV charge-or-ride simulator, policies and evaluation tools."""
from .env import Action, EnvConfig, Observation, RideHailEnv, StepResult
from .trips import SyntheticTripModel, TripModel, ZoneGrid, ingest_trips
from .world import GridSchedule, WorldConfig

__version__ = "0.1.0"

__all__ = [
    "Action", "EnvConfig", "GridSchedule", "Observation", "RideHailEnv", "StepResult",
    "SyntheticTripModel", "TripModel", "WorldConfig", "ZoneGrid", "ingest_trips",
]
