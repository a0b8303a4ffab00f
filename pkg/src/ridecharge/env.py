"""Single-vehicle ride-hailing EV environment.

At every decision the agent either charges (drive to the nearest station,
queue, charge to full) or accepts the pending ride. Rewards:

* charge: ``-(cost + emissions * E)``
* completed ride: the fare
* ride attempted without enough battery: ``-3 * (cost + emissions * E)`` of
  the forced charge that follows; the ride is discarded.

Episodes are decision-indexed and end at the first step whose clock reaches
the horizon (one week by default).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .trips import SyntheticTripModel, TripRequest, ZoneGrid, hour_of
from .world import MINUTES_PER_DAY, Battery, ChargingSession, WorldConfig, plan_charge

WEEK_MINUTES = 7 * MINUTES_PER_DAY
PENALTY_MULTIPLIER = 3.0


class InvalidConfig(ValueError):
    pass


class EpisodeFinished(RuntimeError):
    pass


class Action(IntEnum):
    CHARGE = 0
    ACCEPT_RIDE = 1


class Observation(NamedTuple):
    battery_frac: float
    time_of_day_frac: float
    ride_energy_frac: float
    charge_cost_norm: float
    charge_emissions_norm: float
    finish_time_frac: float
    queue_frac: float


OBS_DIM = len(Observation._fields)
N_ACTIONS = len(Action)


@dataclass
class EnvConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    grid: ZoneGrid = field(default_factory=ZoneGrid)
    trip_model: object = None  # TripModel or SyntheticTripModel; None -> synthetic
    emissions_weight: float = 0.05  # $ per kg CO2
    horizon: float = WEEK_MINUTES
    reserve: float = 2.0  # kWh
    start_zone: int | None = None
    seed: int = 0

    def validate(self) -> None:
        if not self.emissions_weight >= 0:
            raise InvalidConfig("emissions_weight must be >= 0")
        if not self.horizon > 0:
            raise InvalidConfig("horizon must be > 0")
        if not self.reserve >= 0:
            raise InvalidConfig("reserve must be >= 0")
        if self.reserve > self.world.battery_kwh:
            raise InvalidConfig("reserve exceeds battery capacity")
        if self.start_zone is not None and not 0 <= self.start_zone < self.grid.n_zones:
            raise InvalidConfig(f"start_zone {self.start_zone} outside grid")
        if self.trip_model is not None and self.trip_model.grid.n_zones != self.grid.n_zones:
            raise InvalidConfig("trip model grid does not match env grid")
        try:
            self.world.network(self.grid)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from exc


@dataclass
class ChargeEvent:
    clock: float  # decision time, before relocation
    energy: float
    cost: float
    emissions: float
    forced: bool


@dataclass
class EnvState:
    clock: float
    zone: int
    battery: Battery
    pending: TripRequest
    rng: np.random.Generator
    steps: int = 0
    revenue: float = 0.0
    energy_cost: float = 0.0
    emissions: float = 0.0
    miles: float = 0.0
    ride_miles: float = 0.0
    rides: int = 0
    infeasible: int = 0
    forced_cost: float = 0.0
    forced_emissions: float = 0.0
    total_reward: float = 0.0
    charge_events: list = field(default_factory=list)
    done: bool = False


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: dict


@dataclass(frozen=True)
class _ChargePlan:
    relocation_miles: float
    relocation_minutes: float
    relocation_kwh: float
    session: ChargingSession

    @property
    def elapsed(self) -> float:
        return self.relocation_minutes + self.session.wait + self.session.charge_duration


class RideHailEnv:
    """Charge-or-ride decision process for one EV.

    ``reset`` and ``step`` follow the familiar gym shape but ``step`` returns a
    :class:`StepResult`. Info keys: ``branch`` (``charge``, ``ride`` or
    ``infeasible``), ``cost``, ``emissions``, ``energy``, ``fare``, ``miles``,
    ``elapsed``, ``wait``, ``clock``, ``zone``, ``battery``.
    """

    def __init__(self, config: EnvConfig | None = None):
        config = config or EnvConfig()
        config.validate()
        self.config = config
        world = config.world
        grid = config.grid
        self.grid = grid
        self.schedule = world.schedule
        self.capacity = world.battery_kwh
        self.consumption = world.consumption_kwh_per_mile
        self.trip_model = config.trip_model or SyntheticTripModel(grid)
        self.network = world.network(grid)
        self.start_zone = grid.center_zone if config.start_zone is None else config.start_zone
        # per-zone nearest station and relocation distance
        self._nearest = [self.network.nearest(z, grid) for z in range(grid.n_zones)]
        self._reloc_miles = [grid.distance(z, s.zone) * grid.cell_miles
                             for z, s in enumerate(self._nearest)]
        self._reloc_minutes = [m / world.speeds.offpeak_mph * 60.0 for m in self._reloc_miles]
        self.cost_scale = self.capacity * max(self.schedule.price) or 1.0
        self.emissions_scale = self.capacity * max(self.schedule.emissions) or 1.0
        self.queue_scale = self.network.queue_ceiling or 1.0
        self.state: EnvState | None = None

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int | None = None) -> Observation:
        seed = self.config.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        zone = self.start_zone
        pending = self.trip_model.sample(zone, 0.0, rng)
        self.state = EnvState(clock=0.0, zone=zone, battery=Battery(self.capacity),
                              pending=pending, rng=rng)
        return self.observe()

    def step(self, action) -> StepResult:
        s = self.state
        if s is None:
            raise EpisodeFinished("reset() must be called before step()")
        if s.done:
            raise EpisodeFinished("episode is over; call reset()")
        action = Action(int(action))
        E = self.config.emissions_weight
        decision_clock = s.clock
        info = {"fare": 0.0, "cost": 0.0, "emissions": 0.0, "energy": 0.0, "miles": 0.0,
                "wait": 0.0}
        if action is Action.ACCEPT_RIDE and self.is_feasible(s.pending):
            trip = s.pending
            s.battery.drain(trip.distance * self.consumption)
            s.clock += trip.duration
            s.zone = trip.destination
            s.revenue += trip.fare
            s.miles += trip.distance
            s.ride_miles += trip.distance
            s.rides += 1
            reward = trip.fare
            info.update(branch="ride", fare=trip.fare, miles=trip.distance, elapsed=trip.duration)
        else:
            forced = action is Action.ACCEPT_RIDE
            plan = self._plan_charge()
            sess = plan.session
            s.battery.drain(plan.relocation_kwh)
            s.battery.fill()
            s.clock += plan.elapsed
            s.zone = sess.station.zone
            s.miles += plan.relocation_miles
            s.energy_cost += sess.cost
            s.emissions += sess.emissions
            penalty = sess.cost + sess.emissions * E
            if forced:
                reward = -PENALTY_MULTIPLIER * penalty
                s.infeasible += 1
                s.forced_cost += sess.cost
                s.forced_emissions += sess.emissions
            else:
                reward = -penalty
            s.charge_events.append(ChargeEvent(decision_clock, sess.energy, sess.cost,
                                               sess.emissions, forced))
            info.update(branch="infeasible" if forced else "charge", cost=sess.cost,
                        emissions=sess.emissions, energy=sess.energy,
                        miles=plan.relocation_miles, wait=sess.wait, elapsed=plan.elapsed)
        s.steps += 1
        s.total_reward += reward
        s.pending = self.trip_model.sample(s.zone, s.clock, s.rng)
        s.done = s.clock >= self.config.horizon
        info.update(clock=s.clock, zone=s.zone, battery=s.battery.level,
                    decision_clock=decision_clock)
        return StepResult(self.observe(), reward, s.done, info)

    # -- queries -----------------------------------------------------------

    def ride_energy(self, trip: TripRequest) -> float:
        return trip.distance * self.consumption

    def is_feasible(self, trip: TripRequest) -> bool:
        return self.state.battery.level - self.ride_energy(trip) >= self.config.reserve

    def _plan_charge(self) -> _ChargePlan:
        s = self.state
        miles = self._reloc_miles[s.zone]
        minutes = self._reloc_minutes[s.zone]
        kwh = min(miles * self.consumption, s.battery.level)
        session = plan_charge(s.battery.level - kwh, self.capacity, self._nearest[s.zone],
                              s.clock + minutes, self.schedule)
        return _ChargePlan(miles, minutes, kwh, session)

    def observe(self) -> Observation:
        """Features for the current state; the charge branch is evaluated hypothetically."""
        s = self.state
        plan = self._plan_charge()
        sess = plan.session
        finish = (s.clock + plan.elapsed) % MINUTES_PER_DAY
        return Observation(
            s.battery.level / self.capacity,
            (s.clock % MINUTES_PER_DAY) / MINUTES_PER_DAY,
            self.ride_energy(s.pending) / self.capacity,
            sess.cost / self.cost_scale,
            sess.emissions / self.emissions_scale,
            finish / MINUTES_PER_DAY,
            sess.wait / self.queue_scale,
        )

    @property
    def hour(self) -> int:
        return hour_of(self.state.clock)


def reset(config: EnvConfig, seed: int | None = None) -> tuple[RideHailEnv, Observation]:
    env = RideHailEnv(config)
    return env, env.reset(seed)


def obs_is_finite(obs: Observation) -> bool:
    return all(math.isfinite(v) for v in obs)
