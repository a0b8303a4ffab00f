"""Trip demand model: zone grid, taxi-record ingestion and trip sampling.

Two interchangeable models are provided. :class:`TripModel` resamples trips
ingested from taxi trip records, conditioned on (origin zone, hour of day).
:class:`SyntheticTripModel` draws trips from a parametric rule and is what the
default configuration uses when no dataset is available.
"""
from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, asdict
from datetime import datetime, timedelta
from typing import Iterable, Iterator, NamedTuple

import numpy as np

MODEL_VERSION = 1
BUCKET_CAP = 10_000
HOURS = 24
TIME_FORMAT = "%Y-%m-%d %H:%M:%S"

CSV_COLUMNS = (
    "tpep_pickup_datetime",
    "tpep_dropoff_datetime",
    "pickup_longitude",
    "pickup_latitude",
    "dropoff_longitude",
    "dropoff_latitude",
    "trip_distance",
    "fare_amount",
)

# Manhattan, roughly
DEFAULT_BBOX = (-74.02, 40.70, -73.91, 40.88)


class OutOfBounds(ValueError):
    pass


class EmptyModel(ValueError):
    pass


class InvalidParams(ValueError):
    pass


def hour_of(clock: float) -> int:
    """Hour of day (0..23) for a clock given in minutes since Monday 00:00."""
    return int(clock // 60) % HOURS


def _cell_index(x: float) -> int:
    # snap values within rounding error of a cell edge onto that edge
    r = round(x)
    return int(r) if abs(x - r) < 1e-9 else int(math.floor(x))


@dataclass(frozen=True)
class ZoneGrid:
    rows: int = 10
    cols: int = 12
    bbox: tuple[float, float, float, float] = DEFAULT_BBOX
    cell_miles: float = 0.5

    def __post_init__(self):
        min_lon, min_lat, max_lon, max_lat = self.bbox
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and column")
        if not (max_lon > min_lon and max_lat > min_lat):
            raise ValueError(f"degenerate bbox {self.bbox}")
        if not self.cell_miles > 0:
            raise ValueError("cell_miles must be positive")
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))

    @property
    def n_zones(self) -> int:
        return self.rows * self.cols

    @property
    def center_zone(self) -> int:
        return self.zone(self.rows // 2, self.cols // 2)

    def zone(self, row: int, col: int) -> int:
        return row * self.cols + col

    def row_col(self, zone: int) -> tuple[int, int]:
        return divmod(zone, self.cols)

    def distance(self, a: int, b: int) -> int:
        """Manhattan distance in grid steps."""
        ra, ca = divmod(a, self.cols)
        rb, cb = divmod(b, self.cols)
        return abs(ra - rb) + abs(ca - cb)

    def locate(self, lon: float, lat: float) -> int:
        """Row-major zone index of a point; rows run south to north.

        Min edges are inclusive and max edges exclusive, except that the max
        corner itself maps to the last cell.
        """
        min_lon, min_lat, max_lon, max_lat = self.bbox
        if lon == max_lon and lat == max_lat:
            return self.n_zones - 1
        if not (min_lon <= lon < max_lon and min_lat <= lat < max_lat):
            raise OutOfBounds(f"({lon}, {lat}) outside {self.bbox}")
        col = _cell_index((lon - min_lon) * self.cols / (max_lon - min_lon))
        row = _cell_index((lat - min_lat) * self.rows / (max_lat - min_lat))
        return self.zone(min(row, self.rows - 1), min(col, self.cols - 1))

    def cell_bounds(self, zone: int) -> tuple[float, float, float, float]:
        """(lon0, lat0, lon1, lat1) of a zone's cell."""
        min_lon, min_lat, max_lon, max_lat = self.bbox
        row, col = self.row_col(zone)
        dlon = (max_lon - min_lon) / self.cols
        dlat = (max_lat - min_lat) / self.rows
        return (min_lon + col * dlon, min_lat + row * dlat,
                min_lon + (col + 1) * dlon, min_lat + (row + 1) * dlat)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "bbox": list(self.bbox),
                "cell_miles": self.cell_miles}

    @classmethod
    def from_dict(cls, d: dict) -> "ZoneGrid":
        return cls(rows=int(d.get("rows", 10)), cols=int(d.get("cols", 12)),
                   bbox=tuple(d.get("bbox", DEFAULT_BBOX)),
                   cell_miles=float(d.get("cell_miles", 0.5)))


@dataclass(frozen=True)
class TripRecord:
    pickup_time: datetime
    dropoff_time: datetime
    pickup_lon: float
    pickup_lat: float
    dropoff_lon: float
    dropoff_lat: float
    distance: float
    fare: float


class Trip(NamedTuple):
    """A stored trip, independent of where it starts."""
    destination: int
    distance: float
    duration: float
    fare: float


@dataclass(frozen=True)
class TripRequest:
    origin: int
    destination: int
    distance: float  # miles
    duration: float  # minutes
    fare: float  # dollars


def read_trip_csv(path) -> Iterator[TripRecord]:
    """Stream TripRecords from a yellow-cab style CSV file.

    Raises ValueError on a missing column or an unparseable row.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                yield TripRecord(
                    pickup_time=datetime.strptime(row["tpep_pickup_datetime"].strip(), TIME_FORMAT),
                    dropoff_time=datetime.strptime(row["tpep_dropoff_datetime"].strip(), TIME_FORMAT),
                    pickup_lon=float(row["pickup_longitude"]),
                    pickup_lat=float(row["pickup_latitude"]),
                    dropoff_lon=float(row["dropoff_longitude"]),
                    dropoff_lat=float(row["dropoff_latitude"]),
                    distance=float(row["trip_distance"]),
                    fare=float(row["fare_amount"]),
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc


def write_trip_csv(path, records: Iterable[TripRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.pickup_time.strftime(TIME_FORMAT), r.dropoff_time.strftime(TIME_FORMAT),
                        repr(r.pickup_lon), repr(r.pickup_lat), repr(r.dropoff_lon),
                        repr(r.dropoff_lat), repr(r.distance), repr(r.fare)])


@dataclass
class IngestStats:
    kept: int = 0
    dropped: int = 0

    @property
    def total(self) -> int:
        return self.kept + self.dropped


class TripModel:
    """Empirical trip model: uniform resampling of stored trips.

    Lookup falls back through (zone, hour) -> (zone, any hour) ->
    (any zone, hour) -> global pool, using the first non-empty tier.
    """

    kind = "empirical"

    def __init__(self, grid: ZoneGrid, buckets: dict[tuple[int, int], list[Trip]],
                 stats: IngestStats | None = None):
        self.grid = grid
        self.buckets = {k: [Trip(*t) for t in v] for k, v in buckets.items() if v}
        if not self.buckets:
            raise EmptyModel("trip model has no trips")
        self.stats = stats if stats is not None else IngestStats(kept=self.size)
        by_zone: dict[int, list[Trip]] = {}
        by_hour: dict[int, list[Trip]] = {}
        pool: list[Trip] = []
        for (zone, hour), trips in sorted(self.buckets.items()):
            by_zone.setdefault(zone, []).extend(trips)
            by_hour.setdefault(hour, []).extend(trips)
            pool.extend(trips)
        self._by_zone = by_zone
        self._by_hour = by_hour
        self._pool = pool

    @property
    def size(self) -> int:
        return sum(len(v) for v in self.buckets.values())

    def candidates(self, origin: int, hour: int) -> tuple[str, list[Trip]]:
        """The fallback tier name and trip list used for (origin, hour)."""
        trips = self.buckets.get((origin, hour))
        if trips:
            return "zone_hour", trips
        trips = self._by_zone.get(origin)
        if trips:
            return "zone", trips
        trips = self._by_hour.get(hour)
        if trips:
            return "hour", trips
        return "global", self._pool

    def sample(self, origin: int, clock: float, rng: np.random.Generator) -> TripRequest:
        _, trips = self.candidates(origin, hour_of(clock))
        t = trips[int(rng.integers(len(trips)))]
        return TripRequest(origin, t.destination, t.distance, t.duration, t.fare)

    def to_dict(self) -> dict:
        buckets = [
            {"zone": z, "hour": h, "trips": [list(t) for t in trips]}
            for (z, h), trips in sorted(self.buckets.items())
        ]
        return {"version": MODEL_VERSION, "kind": self.kind, "grid": self.grid.to_dict(),
                "stats": asdict(self.stats), "buckets": buckets}

    @classmethod
    def from_dict(cls, d: dict) -> "TripModel":
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported trip model version {d.get('version')!r}")
        buckets = {(int(b["zone"]), int(b["hour"])):
                   [Trip(int(t[0]), float(t[1]), float(t[2]), float(t[3])) for t in b["trips"]]
                   for b in d["buckets"]}
        stats = IngestStats(**d["stats"]) if "stats" in d else None
        return cls(ZoneGrid.from_dict(d["grid"]), buckets, stats)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TripModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def ingest_trips(records: Iterable[TripRecord], grid: ZoneGrid, seed: int = 0,
                 cap: int = BUCKET_CAP) -> TripModel:
    """Bin trip records onto the grid by (pickup zone, pickup hour).

    Records with non-positive duration, negative fare or distance, or either
    endpoint outside the grid are dropped and counted. Buckets over ``cap``
    trips are reservoir-sampled with a ``seed``-ed generator.
    """
    rng = np.random.default_rng(seed)
    stats = IngestStats()
    buckets: dict[tuple[int, int], list[Trip]] = {}
    seen: dict[tuple[int, int], int] = {}
    for rec in records:
        minutes = (rec.dropoff_time - rec.pickup_time).total_seconds() / 60.0
        ok = (minutes > 0 and rec.fare >= 0 and rec.distance >= 0
              and math.isfinite(rec.fare) and math.isfinite(rec.distance))
        if ok:
            try:
                origin = grid.locate(rec.pickup_lon, rec.pickup_lat)
                dest = grid.locate(rec.dropoff_lon, rec.dropoff_lat)
            except OutOfBounds:
                ok = False
        if not ok:
            stats.dropped += 1
            continue
        stats.kept += 1
        key = (origin, rec.pickup_time.hour)
        trip = Trip(dest, float(rec.distance), float(minutes), float(rec.fare))
        n = seen.get(key, 0) + 1
        seen[key] = n
        bucket = buckets.setdefault(key, [])
        if len(bucket) < cap:
            bucket.append(trip)
        else:
            j = int(rng.integers(n))
            if j < cap:
                bucket[j] = trip
    if stats.kept == 0:
        raise EmptyModel(f"no usable trip records ({stats.dropped} dropped)")
    return TripModel(grid, buckets, stats)


def sample_trip(model, origin: int, clock: float, rng: np.random.Generator) -> TripRequest:
    return model.sample(origin, clock, rng)


def in_windows(hour: int, windows) -> bool:
    return any(lo <= hour < hi for lo, hi in windows)


@dataclass(frozen=True)
class SyntheticParams:
    base_fare: float = 2.50
    per_mile: float = 1.80
    surge: float = 1.5
    surge_windows: tuple = ((7, 10), (16, 19))
    dest_scale: float = 3.0  # grid steps
    offpeak_mph: float = 12.0
    peak_mph: float = 8.0
    peak_windows: tuple = ((7, 10), (16, 19))
    # relative request intensity by hour; shapes generate_records() only
    demand_by_hour: tuple = (0.5, 0.35, 0.25, 0.2, 0.2, 0.3, 0.6, 1.0, 1.3, 1.2, 1.0, 1.0,
                             1.1, 1.0, 1.0, 1.1, 1.2, 1.4, 1.5, 1.4, 1.2, 1.0, 0.9, 0.7)

    def __post_init__(self):
        if not (self.offpeak_mph > 0 and self.peak_mph > 0):
            raise InvalidParams("speeds must be positive")
        if not self.dest_scale > 0:
            raise InvalidParams("dest_scale must be positive")
        if self.base_fare < 0 or self.per_mile < 0 or self.surge < 0:
            raise InvalidParams("fare parameters must be non-negative")
        if len(self.demand_by_hour) != HOURS or min(self.demand_by_hour) < 0:
            raise InvalidParams("demand_by_hour needs 24 non-negative weights")
        object.__setattr__(self, "surge_windows", tuple(tuple(w) for w in self.surge_windows))
        object.__setattr__(self, "peak_windows", tuple(tuple(w) for w in self.peak_windows))
        object.__setattr__(self, "demand_by_hour", tuple(float(v) for v in self.demand_by_hour))

    def speed(self, hour: int) -> float:
        return self.peak_mph if in_windows(hour, self.peak_windows) else self.offpeak_mph

    def surge_at(self, hour: int) -> float:
        return self.surge if in_windows(hour, self.surge_windows) else 1.0

    def fare(self, miles: float, hour: int) -> float:
        return (self.base_fare + self.per_mile * miles) * self.surge_at(hour)


class SyntheticTripModel:
    """Parametric trip sampler over a zone grid.

    Destinations are drawn with weight ``exp(-d / dest_scale)`` over grid
    distance ``d``, never the origin itself. Distance is ``d * cell_miles``,
    duration follows the hourly speed and fares carry the hourly surge.
    """

    kind = "synthetic"

    def __init__(self, grid: ZoneGrid, params: SyntheticParams | None = None):
        self.grid = grid
        self.params = params or SyntheticParams()
        if grid.n_zones < 2:
            raise InvalidParams("synthetic model needs at least two zones")
        n = grid.n_zones
        self._dest_cdf: list[list[float]] = []
        self._dest_steps: list[list[int]] = []
        for o in range(n):
            steps = [grid.distance(o, z) for z in range(n)]
            dmin = min(s for z, s in enumerate(steps) if z != o)
            # shift by the minimum distance so tiny scales don't underflow
            w = np.array([0.0 if z == o else math.exp(-(s - dmin) / self.params.dest_scale)
                          for z, s in enumerate(steps)])
            cdf = np.cumsum(w / w.sum())
            cdf[-1] = 1.0
            self._dest_cdf.append(cdf.tolist())
            self._dest_steps.append(steps)

    def destination_probs(self, origin: int) -> np.ndarray:
        cdf = np.asarray(self._dest_cdf[origin])
        return np.diff(cdf, prepend=0.0)

    def trip(self, origin: int, destination: int, hour: int) -> TripRequest:
        p = self.params
        miles = self._dest_steps[origin][destination] * self.grid.cell_miles
        return TripRequest(origin, destination, miles, miles / p.speed(hour) * 60.0,
                           p.fare(miles, hour))

    def sample(self, origin: int, clock: float, rng: np.random.Generator) -> TripRequest:
        cdf = self._dest_cdf[origin]
        dest = bisect.bisect_right(cdf, rng.random())
        # guard against the zero-width self slot at the edges
        while dest >= len(cdf) or dest == origin:
            dest = bisect.bisect_right(cdf, rng.random())
        return self.trip(origin, dest, hour_of(clock))

    def generate_records(self, n: int, rng: np.random.Generator,
                         start: datetime = datetime(2015, 1, 5)) -> list[TripRecord]:
        """Draw ``n`` synthetic taxi records over one week starting at ``start``.

        Pickup hours follow ``demand_by_hour``; origins are uniform over zones
        and positions uniform within each cell.
        """
        demand = np.asarray(self.params.demand_by_hour)
        hour_p = demand / demand.sum()
        out = []
        for _ in range(n):
            day = int(rng.integers(7))
            hour = int(rng.choice(HOURS, p=hour_p))
            minute = int(rng.integers(60))
            pickup = start + timedelta(days=day, hours=hour, minutes=minute)
            origin = int(rng.integers(self.grid.n_zones))
            req = self.sample(origin, hour * 60 + minute, rng)
            plon, plat = self._point_in(origin, rng)
            dlon, dlat = self._point_in(req.destination, rng)
            dropoff = pickup + timedelta(seconds=max(60, round(req.duration * 60)))
            out.append(TripRecord(pickup, dropoff, plon, plat, dlon, dlat,
                                  round(float(req.distance), 2), round(float(req.fare), 2)))
        return out

    def _point_in(self, zone: int, rng) -> tuple[float, float]:
        lon0, lat0, lon1, lat1 = self.grid.cell_bounds(zone)
        u, v = rng.random(2)
        # keep strictly inside so float error can't push a point across a cell edge
        return (float(lon0 + (0.05 + 0.9 * u) * (lon1 - lon0)),
                float(lat0 + (0.05 + 0.9 * v) * (lat1 - lat0)))
