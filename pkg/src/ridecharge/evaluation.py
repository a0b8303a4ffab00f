"""Seeded evaluation runs and the aggregate metrics reported for a policy."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .env import EnvConfig, RideHailEnv
from .trips import HOURS, hour_of

REPORT_VERSION = 1
EPISODE_COLUMNS = ("seed", "total_reward", "revenue", "energy_cost", "emissions", "miles",
                   "ride_miles", "rides_completed", "infeasible_events", "voluntary_charges",
                   "forced_charges", "steps", "dollars_per_mile")


class EmptyInput(ValueError):
    pass


@dataclass
class EpisodeMetrics:
    seed: int
    total_reward: float
    revenue: float
    energy_cost: float
    emissions: float
    miles: float
    ride_miles: float
    rides_completed: int
    infeasible_events: int
    steps: int
    forced_cost: float
    forced_emissions: float
    final_clock: float
    charge_events: list = field(default_factory=list)  # dicts: clock, energy, cost, emissions, forced

    @property
    def voluntary_charges(self) -> int:
        return sum(not e["forced"] for e in self.charge_events)

    @property
    def forced_charges(self) -> int:
        return sum(e["forced"] for e in self.charge_events)

    @property
    def dollars_per_mile(self) -> float | None:
        return self.energy_cost / self.miles if self.miles > 0 else None

    def row(self) -> dict:
        d = {k: getattr(self, k) for k in EPISODE_COLUMNS}
        return d


def _as_action(policy, obs):
    return policy.act(obs) if hasattr(policy, "act") else policy(obs)


def run_episode(config: EnvConfig | RideHailEnv, policy, seed: int, ledger: list | None = None
                ) -> EpisodeMetrics:
    """Play one episode with ``policy`` (an object with ``act`` or a callable).

    If ``ledger`` is given, each step's ``(action, reward, info)`` is appended.
    """
    env = config if isinstance(config, RideHailEnv) else RideHailEnv(config)
    obs = env.reset(seed)
    done = False
    while not done:
        action = _as_action(policy, obs)
        res = env.step(action)
        if ledger is not None:
            ledger.append((int(action), res.reward, res.info))
        obs, done = res.observation, res.done
    s = env.state
    return EpisodeMetrics(
        seed=seed, total_reward=s.total_reward, revenue=s.revenue, energy_cost=s.energy_cost,
        emissions=s.emissions, miles=s.miles, ride_miles=s.ride_miles, rides_completed=s.rides,
        infeasible_events=s.infeasible, steps=s.steps, forced_cost=s.forced_cost,
        forced_emissions=s.forced_emissions, final_clock=s.clock,
        charge_events=[asdict(e) for e in s.charge_events],
    )


def _run_many(args):
    config, policy, seeds = args
    env = RideHailEnv(config)
    return [run_episode(env, policy, s) for s in seeds]


def evaluate(config: EnvConfig, policy, episodes: int, seed: int = 0, workers: int = 1
             ) -> list[EpisodeMetrics]:
    """Episodes use seeds ``seed, seed+1, ...`` so policies share trip streams."""
    seeds = [seed + i for i in range(episodes)]
    if workers <= 1 or episodes < 2:
        return _run_many((config, policy, seeds))
    chunks = [seeds[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(workers) as pool:
        parts = list(pool.map(_run_many, [(config, policy, c) for c in chunks if c]))
    by_seed = {m.seed: m for part in parts for m in part}
    return [by_seed[s] for s in seeds]


def charge_histogram(events) -> list[int]:
    """Counts by hour of day of each event's decision clock (minutes)."""
    bins = [0] * HOURS
    for e in events:
        clock = e["clock"] if isinstance(e, dict) else getattr(e, "clock", e)
        bins[hour_of(clock)] += 1
    return bins


def moving_average(series, window: int) -> list[float]:
    """Trailing mean; the first ``window - 1`` points average the available prefix."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = [float(v) for v in series]
    return [math.fsum(x[max(0, i + 1 - window):i + 1]) / min(i + 1, window)
            for i in range(len(x))]


@dataclass
class AggregateReport:
    episodes: int
    mean_reward: float
    std_reward: float
    min_reward: float
    max_reward: float
    dollars_per_mile: float | None  # pooled; None when no miles were driven
    mean_revenue: float
    mean_energy_cost: float
    mean_emissions: float
    mean_rides: float
    histogram_voluntary: list
    histogram_forced: list
    rows: list

    @property
    def histogram_total(self) -> list:
        return [a + b for a, b in zip(self.histogram_voluntary, self.histogram_forced)]

    def to_dict(self, **meta) -> dict:
        d = {"version": REPORT_VERSION, **meta}
        d["summary"] = {k: getattr(self, k) for k in (
            "episodes", "mean_reward", "std_reward", "min_reward", "max_reward",
            "dollars_per_mile", "mean_revenue", "mean_energy_cost", "mean_emissions",
            "mean_rides")}
        d["histogram"] = {"voluntary": self.histogram_voluntary,
                          "forced": self.histogram_forced, "total": self.histogram_total}
        d["episodes"] = self.rows
        return d


def aggregate(metrics: list[EpisodeMetrics]) -> AggregateReport:
    if not metrics:
        raise EmptyInput("no episodes to aggregate")
    metrics = sorted(metrics, key=lambda m: m.seed)
    rewards = np.array([m.total_reward for m in metrics])
    miles = math.fsum(m.miles for m in metrics)
    cost = math.fsum(m.energy_cost for m in metrics)
    events = [e for m in metrics for e in m.charge_events]
    return AggregateReport(
        episodes=len(metrics),
        mean_reward=float(rewards.mean()),
        std_reward=float(rewards.std()),
        min_reward=float(rewards.min()),
        max_reward=float(rewards.max()),
        dollars_per_mile=cost / miles if miles > 0 else None,
        mean_revenue=float(np.mean([m.revenue for m in metrics])),
        mean_energy_cost=float(np.mean([m.energy_cost for m in metrics])),
        mean_emissions=float(np.mean([m.emissions for m in metrics])),
        mean_rides=float(np.mean([m.rides_completed for m in metrics])),
        histogram_voluntary=charge_histogram(e for e in events if not e["forced"]),
        histogram_forced=charge_histogram(e for e in events if e["forced"]),
        rows=[m.row() for m in metrics],
    )


def write_json(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


class SchemaError(ValueError):
    pass


def report_to_csv(doc: dict, outdir, curve=None, window: int = 50) -> list[str]:
    """Write ``episodes.csv`` and ``histogram.csv`` (plus ``curve.csv`` when a
    training curve is supplied). Returns the written paths."""
    try:
        if doc["version"] != REPORT_VERSION:
            raise SchemaError(f"unsupported report version {doc['version']!r}")
        rows = doc["episodes"]
        hist = doc["histogram"]
        vol, forced = hist["voluntary"], hist["forced"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"report is missing {exc}") from exc
    if len(vol) != HOURS or len(forced) != HOURS:
        raise SchemaError("histogram must have 24 bins")
    os.makedirs(outdir, exist_ok=True)
    written = []
    path = os.path.join(outdir, "episodes.csv")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EPISODE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k) for k in EPISODE_COLUMNS})
    written.append(path)
    path = os.path.join(outdir, "histogram.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("hour", "voluntary", "forced", "total"))
        for h in range(HOURS):
            w.writerow((h, vol[h], forced[h], vol[h] + forced[h]))
    written.append(path)
    if curve is not None:
        path = os.path.join(outdir, "curve.csv")
        smooth = moving_average(curve, window)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("episode", "total_reward", f"moving_average_{window}"))
            for i, (r, m) in enumerate(zip(curve, smooth)):
                w.writerow((i, repr(float(r)), repr(m)))
        written.append(path)
    return written


def read_curve(path) -> list[float]:
    with open(path, newline="") as fh:
        return [float(r["total_reward"]) for r in csv.DictReader(fh)]


def write_curve(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("episode", "total_reward", "steps", "charges", "worker"))
        for r in records:
            w.writerow((r.episode, repr(float(r.total_reward)), r.steps, r.charges, r.worker))
