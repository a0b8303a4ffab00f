"""Battery, charging stations and the time-of-use electric grid."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .trips import HOURS, ZoneGrid, TripRequest, in_windows

MINUTES_PER_DAY = 1440

DEFAULT_PRICE = (0.08,) * 6 + (0.12,) * 3 + (0.10,) * 3 + (0.07,) * 2 + (0.10,) * 2 + (0.22,) * 5 + (0.10,) * 3
DEFAULT_EMISSIONS = (0.35,) * 6 + (0.30,) * 3 + (0.15,) * 7 + (0.40,) * 5 + (0.32,) * 3


@dataclass
class Battery:
    capacity: float = 100.0  # kWh
    level: float | None = None

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError("battery capacity must be positive")
        if self.level is None:
            self.level = self.capacity
        if not 0 <= self.level <= self.capacity:
            raise ValueError(f"level {self.level} outside [0, {self.capacity}]")

    @property
    def frac(self) -> float:
        return self.level / self.capacity

    def drain(self, kwh: float) -> float:
        """Remove up to ``kwh``; returns what was actually drawn."""
        drawn = min(max(kwh, 0.0), self.level)
        self.level -= drawn
        return drawn

    def fill(self) -> None:
        self.level = self.capacity


@dataclass(frozen=True)
class GridSchedule:
    price: tuple = DEFAULT_PRICE  # $/kWh by hour
    emissions: tuple = DEFAULT_EMISSIONS  # kgCO2/kWh by hour

    def __post_init__(self):
        for name in ("price", "emissions"):
            table = tuple(float(v) for v in getattr(self, name))
            if len(table) != HOURS:
                raise ValueError(f"{name} table needs {HOURS} entries, got {len(table)}")
            if min(table) < 0:
                raise ValueError(f"{name} table has negative entries")
            object.__setattr__(self, name, table)

    def price_at(self, t: float) -> float:
        return self.price[int((t % MINUTES_PER_DAY) // 60)]

    def emissions_at(self, t: float) -> float:
        return self.emissions[int((t % MINUTES_PER_DAY) // 60)]

    def integrate(self, start: float, minutes: float, power: float) -> tuple[float, float]:
        """Cost ($) and emissions (kg) of drawing ``power`` kW over [start, start+minutes).

        Exact for the piecewise-constant hourly tables.
        """
        cost = kg = 0.0
        t = start
        end = start + minutes
        while t < end:
            hour_index = math.floor(t / 60)
            seg_end = min(end, (hour_index + 1) * 60.0)
            kwh = power * (seg_end - t) / 60.0
            h = hour_index % HOURS
            cost += kwh * self.price[h]
            kg += kwh * self.emissions[h]
            t = seg_end
        return cost, kg


def price_at(schedule: GridSchedule, t: float) -> float:
    return schedule.price_at(t)


def emissions_at(schedule: GridSchedule, t: float) -> float:
    return schedule.emissions_at(t)


@dataclass(frozen=True)
class QueuePeak:
    center_h: float
    amp_min: float
    width_h: float

    def __post_init__(self):
        if self.amp_min < 0 or not self.width_h > 0:
            raise ValueError("queue peak needs amp >= 0 and width > 0")


DEFAULT_PEAKS = (QueuePeak(8.5, 25.0, 1.5), QueuePeak(18.0, 25.0, 1.5))


@dataclass(frozen=True)
class QueueProfile:
    base_min: float = 5.0
    peaks: tuple = DEFAULT_PEAKS

    def __post_init__(self):
        if self.base_min < 0:
            raise ValueError("queue base must be >= 0")

    @property
    def ceiling(self) -> float:
        return self.base_min + sum(p.amp_min for p in self.peaks)

    def wait(self, t: float) -> float:
        h = (t % MINUTES_PER_DAY) / 60.0
        w = self.base_min
        for p in self.peaks:
            z = (h - p.center_h) / p.width_h
            w += p.amp_min * math.exp(-z * z)
        return w


@dataclass(frozen=True)
class ChargingStation:
    zone: int
    power_kw: float = 100.0
    queue: QueueProfile = field(default_factory=QueueProfile)

    def __post_init__(self):
        if not self.power_kw > 0:
            raise ValueError("station power must be positive")

    def queue_wait(self, t: float) -> float:
        return self.queue.wait(t)


def queue_wait(station: ChargingStation, t: float) -> float:
    return station.queue_wait(t)


def spread_zones(grid: ZoneGrid, block_rows: int = 3, block_cols: int = 4) -> list[int]:
    """Zones at the centers of a block_rows x block_cols partition of the grid."""
    rows = [int((i + 0.5) * grid.rows / block_rows) for i in range(block_rows)]
    cols = [int((j + 0.5) * grid.cols / block_cols) for j in range(block_cols)]
    return [grid.zone(r, c) for r in rows for c in cols]


@dataclass(frozen=True)
class ChargingNetwork:
    stations: tuple

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        if not self.stations:
            raise ValueError("charging network is empty")
        zones = [s.zone for s in self.stations]
        if len(set(zones)) != len(zones):
            raise ValueError("station zones must be distinct")

    @classmethod
    def spread(cls, grid: ZoneGrid, power_kw: float = 100.0,
               queue: QueueProfile | None = None, block_rows: int = 3,
               block_cols: int = 4) -> "ChargingNetwork":
        queue = queue or QueueProfile()
        return cls(tuple(ChargingStation(z, power_kw, queue)
                         for z in spread_zones(grid, block_rows, block_cols)))

    def validate(self, grid: ZoneGrid) -> None:
        for s in self.stations:
            if not 0 <= s.zone < grid.n_zones:
                raise ValueError(f"station zone {s.zone} outside grid")

    def nearest(self, zone: int, grid: ZoneGrid) -> ChargingStation:
        """Station at least Manhattan distance; ties go to the lowest index."""
        best = self.stations[0]
        best_d = grid.distance(zone, best.zone)
        for s in self.stations[1:]:
            d = grid.distance(zone, s.zone)
            if d < best_d:
                best, best_d = s, d
        return best

    @property
    def queue_ceiling(self) -> float:
        return max(s.queue.ceiling for s in self.stations)


def nearest_station(network: ChargingNetwork, zone: int, grid: ZoneGrid) -> ChargingStation:
    return network.nearest(zone, grid)


@dataclass(frozen=True)
class ChargingSession:
    station: ChargingStation
    start: float  # arrival at the station, clock minutes
    wait: float
    charge_duration: float
    energy: float  # kWh
    cost: float  # dollars
    emissions: float  # kg

    @property
    def end(self) -> float:
        return self.start + self.wait + self.charge_duration


def plan_charge(level: float, capacity: float, station: ChargingStation, t: float,
                schedule: GridSchedule) -> ChargingSession:
    """Charge-to-full session for a battery at ``level`` arriving at ``t``."""
    energy = max(capacity - level, 0.0)
    wait = station.queue_wait(t)
    duration = energy / station.power_kw * 60.0
    cost, kg = schedule.integrate(t + wait, duration, station.power_kw)
    return ChargingSession(station, t, wait, duration, energy, cost, kg)


def charge_session(battery: Battery, station: ChargingStation, t: float,
                   schedule: GridSchedule) -> ChargingSession:
    """Run a session and leave ``battery`` full."""
    session = plan_charge(battery.level, battery.capacity, station, t, schedule)
    battery.fill()
    return session


def ride_energy(trip: TripRequest, consumption: float) -> float:
    return trip.distance * consumption


@dataclass(frozen=True)
class Speeds:
    offpeak_mph: float = 12.0
    peak_mph: float = 8.0
    peak_windows: tuple = ((7, 10), (16, 19))

    def __post_init__(self):
        if not (self.offpeak_mph > 0 and self.peak_mph > 0):
            raise ValueError("speeds must be positive")
        object.__setattr__(self, "peak_windows", tuple(tuple(w) for w in self.peak_windows))

    def at_hour(self, hour: int) -> float:
        return self.peak_mph if in_windows(hour, self.peak_windows) else self.offpeak_mph


@dataclass(frozen=True)
class WorldConfig:
    battery_kwh: float = 100.0
    charge_kw: float = 100.0
    consumption_kwh_per_mile: float = 0.5
    schedule: GridSchedule = field(default_factory=GridSchedule)
    stations: ChargingNetwork | None = None  # None: spread over the grid
    speeds: Speeds = field(default_factory=Speeds)

    def __post_init__(self):
        if not (self.battery_kwh > 0 and self.charge_kw > 0 and self.consumption_kwh_per_mile > 0):
            raise ValueError("battery, charge power and consumption must be positive")

    def network(self, grid: ZoneGrid) -> ChargingNetwork:
        net = self.stations or ChargingNetwork.spread(grid, self.charge_kw)
        net.validate(grid)
        return net

    def to_dict(self) -> dict:
        d = {
            "battery_kwh": self.battery_kwh,
            "charge_kw": self.charge_kw,
            "consumption_kwh_per_mile": self.consumption_kwh_per_mile,
            "price_by_hour": list(self.schedule.price),
            "emissions_by_hour": list(self.schedule.emissions),
            "stations": None,
            "speeds": {"offpeak_mph": self.speeds.offpeak_mph, "peak_mph": self.speeds.peak_mph,
                       "peak_windows": [list(w) for w in self.speeds.peak_windows]},
        }
        if self.stations is not None:
            d["stations"] = [
                {"zone": s.zone, "power_kw": s.power_kw,
                 "queue": {"base_min": s.queue.base_min,
                           "peaks": [{"center_h": p.center_h, "amp_min": p.amp_min,
                                      "width_h": p.width_h} for p in s.queue.peaks]}}
                for s in self.stations.stations]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        stations = None
        if d.get("stations"):
            stations = ChargingNetwork(tuple(
                ChargingStation(
                    int(s["zone"]), float(s.get("power_kw", d.get("charge_kw", 100.0))),
                    QueueProfile(float(s.get("queue", {}).get("base_min", 5.0)),
                                 tuple(QueuePeak(float(p["center_h"]), float(p["amp_min"]),
                                                 float(p["width_h"]))
                                       for p in s.get("queue", {}).get("peaks", []))
                                 if "queue" in s else DEFAULT_PEAKS))
                for s in d["stations"]))
        sp = d.get("speeds") or {}
        return cls(
            battery_kwh=float(d.get("battery_kwh", 100.0)),
            charge_kw=float(d.get("charge_kw", 100.0)),
            consumption_kwh_per_mile=float(d.get("consumption_kwh_per_mile", 0.5)),
            schedule=GridSchedule(tuple(d.get("price_by_hour", DEFAULT_PRICE)),
                                  tuple(d.get("emissions_by_hour", DEFAULT_EMISSIONS))),
            stations=stations,
            speeds=Speeds(float(sp.get("offpeak_mph", 12.0)), float(sp.get("peak_mph", 8.0)),
                          tuple(tuple(w) for w in sp.get("peak_windows", ((7, 10), (16, 19))))),
        )
