import csv

import pytest
from hypothesis import given, settings, strategies as st

from ridecharge.agents import ThresholdPolicy
from ridecharge.env import EnvConfig
from ridecharge.evaluation import (
    EmptyInput, EpisodeMetrics, SchemaError, aggregate, charge_histogram, evaluate,
    moving_average, report_to_csv, run_episode,
)

SHORT = EnvConfig(horizon=1440.0)


def metrics(seed, reward, cost=0.0, miles=0.0, events=()):
    return EpisodeMetrics(seed=seed, total_reward=reward, revenue=0.0, energy_cost=cost,
                          emissions=0.0, miles=miles, ride_miles=miles, rides_completed=0,
                          infeasible_events=0, steps=1, forced_cost=0.0, forced_emissions=0.0,
                          final_clock=10080.0, charge_events=list(events))


class TestRunEpisode:
    def test_always_charge_gives_no_rides(self):
        m = run_episode(SHORT, ThresholdPolicy(1.0), seed=0)
        assert m.rides_completed == 0 and m.revenue == 0.0
        assert m.voluntary_charges == m.steps
        assert m.final_clock >= 1440.0

    def test_deterministic(self):
        a = run_episode(SHORT, ThresholdPolicy(0.1), seed=4)
        b = run_episode(SHORT, ThresholdPolicy(0.1), seed=4)
        assert a == b

    @pytest.mark.parametrize("E", [0.0, 0.05, 1.0])
    def test_ledger_reconciles(self, E):
        ledger = []
        m = run_episode(EnvConfig(emissions_weight=E), ThresholdPolicy(0.1), 2, ledger=ledger)
        vol_cost = m.energy_cost - m.forced_cost
        vol_kg = m.emissions - m.forced_emissions
        expected = (m.revenue - (vol_cost + E * vol_kg)
                    - 3.0 * (m.forced_cost + E * m.forced_emissions))
        assert abs(sum(r for _, r, _ in ledger) - expected) <= 1e-9 * max(1.0, abs(expected))
        assert abs(m.total_reward - sum(r for _, r, _ in ledger)) <= 1e-9

    def test_evaluate_workers_match_serial(self):
        a = evaluate(SHORT, ThresholdPolicy(0.25), episodes=4, seed=10)
        b = evaluate(SHORT, ThresholdPolicy(0.25), episodes=4, seed=10, workers=2)
        assert [m.seed for m in a] == [10, 11, 12, 13]
        assert a == b


class TestAggregate:
    def test_empty(self):
        with pytest.raises(EmptyInput):
            aggregate([])

    def test_singleton(self):
        rep = aggregate([metrics(0, 100.0, cost=5.0, miles=50.0)])
        assert rep.mean_reward == 100.0 and rep.std_reward == 0.0
        assert rep.min_reward == rep.max_reward == 100.0
        assert rep.dollars_per_mile == 0.1

    def test_pooled_dollars_per_mile(self):
        rep = aggregate([metrics(0, 1.0, cost=10.0, miles=100.0), metrics(1, 2.0, cost=20.0, miles=100.0)])
        assert rep.dollars_per_mile == pytest.approx(0.15)
        assert rep.std_reward == pytest.approx(0.5)

    def test_zero_miles(self):
        rep = aggregate([metrics(0, 1.0), metrics(1, 2.0)])
        assert rep.dollars_per_mile is None
        assert rep.to_dict()["summary"]["dollars_per_mile"] is None

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(0, 100), st.floats(0.1, 500)),
                    min_size=1, max_size=8), st.randoms())
    def test_permutation_invariant(self, rows, rnd):
        ms = [metrics(i, r, c, mi) for i, (r, c, mi) in enumerate(rows)]
        shuffled = ms[:]
        rnd.shuffle(shuffled)
        a, b = aggregate(ms), aggregate(shuffled)
        assert a.to_dict() == b.to_dict()

    def test_histograms_split_by_kind(self):
        ev = [{"clock": 61.0, "forced": False}, {"clock": 1440 + 61.0, "forced": True},
              {"clock": 23 * 60 + 59.9, "forced": False}]
        rep = aggregate([metrics(0, 0.0, events=ev)])
        assert rep.histogram_voluntary[1] == 1 and rep.histogram_voluntary[23] == 1
        assert rep.histogram_forced[1] == 1
        assert sum(rep.histogram_total) == 3


class TestHistogram:
    def test_examples(self):
        h = charge_histogram([{"clock": 0.0}, {"clock": 59.999}, {"clock": 60.0}, {"clock": 1440.0 + 125}])
        assert h[0] == 2 and h[1] == 1 and h[2] == 1 and len(h) == 24

    @given(st.lists(st.floats(0, 10080, exclude_max=True), max_size=50))
    def test_counts_conserved(self, clocks):
        assert sum(charge_histogram(clocks)) == len(clocks)


class TestMovingAverage:
    def test_examples(self):
        assert moving_average([1, 2, 3, 4], 2) == [1.0, 1.5, 2.5, 3.5]
        assert moving_average([], 3) == []

    @given(st.lists(st.floats(-1e6, 1e6), max_size=30))
    def test_window_one_is_identity(self, xs):
        assert moving_average(xs, 1) == xs

    def test_constant_series(self):
        assert moving_average([5.0] * 10, 4) == [5.0] * 10

    def test_bad_window(self):
        with pytest.raises(ValueError):
            moving_average([1.0], 0)


class TestCsv:
    def test_round_trip(self, tmp_path):
        ms = evaluate(SHORT, ThresholdPolicy(0.1), episodes=3, seed=0)
        doc = aggregate(ms).to_dict(policy="heuristic:0.1")
        paths = report_to_csv(doc, tmp_path, curve=[1.0, 2.0, 3.0], window=2)
        assert len(paths) == 3
        with open(tmp_path / "episodes.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 3
        with open(tmp_path / "histogram.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["hour"]) for r in rows] == list(range(24))
        with open(tmp_path / "curve.csv") as fh:
            smooth = [float(r["moving_average_2"]) for r in csv.DictReader(fh)]
        assert smooth == [1.0, 1.5, 2.5]

    @pytest.mark.parametrize("doc", [{}, {"version": 2, "episodes": [], "histogram": {}},
                                     {"version": 1, "episodes": [],
                                      "histogram": {"voluntary": [0], "forced": [0]}}])
    def test_schema_errors(self, tmp_path, doc):
        with pytest.raises(SchemaError):
            report_to_csv(doc, tmp_path)
