import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ridecharge.cli import main, parse_policy, UsageError
from ridecharge.agents import ThresholdPolicy
from ridecharge.trips import SyntheticTripModel, TripModel, ZoneGrid, write_trip_csv

FAST = ["--set", "env.horizon_min=600", "--set", "learner.batch_size=256"]


def three_row_csv(path):
    recs = SyntheticTripModel(ZoneGrid()).generate_records(3, np.random.default_rng(0))
    write_trip_csv(path, recs)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestIngest:
    def test_missing_file(self, tmp_path):
        assert main(["ingest", "--trips", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "m.json")]) == 2

    def test_three_rows(self, tmp_path):
        src = three_row_csv(tmp_path / "t.csv")
        out = tmp_path / "m.json"
        assert main(["ingest", "--trips", str(src), "--out", str(out)]) == 0
        model = TripModel.load(out)
        assert model.size == 3 and model.stats.kept == 3

    def test_rerun_is_byte_identical(self, tmp_path):
        src = tmp_path / "t.csv"
        write_trip_csv(src, SyntheticTripModel(ZoneGrid()).generate_records(500, np.random.default_rng(1)))
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["ingest", "--trips", str(src), "--out", str(a)]) == 0
        assert main(["ingest", "--trips", str(src), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_malformed_csv(self, tmp_path):
        src = tmp_path / "bad.csv"
        src.write_text("x,y\n1,2\n")
        assert main(["ingest", "--trips", str(src), "--out", str(tmp_path / "m.json")]) == 1

    def test_ingested_model_drives_env(self, tmp_path):
        src = tmp_path / "t.csv"
        write_trip_csv(src, SyntheticTripModel(ZoneGrid()).generate_records(300, np.random.default_rng(2)))
        model = tmp_path / "m.json"
        main(["ingest", "--trips", str(src), "--out", str(model)])
        out = tmp_path / "r.json"
        rc = main(["evaluate", "--policy", "heuristic:0.1", "--episodes", "2", "--out", str(out),
                   "--set", f"trips.model={json.dumps(str(model))}", "--set", "env.horizon_min=600"])
        assert rc == 0
        assert json.loads(out.read_text())["summary"]["episodes"] == 2


class TestTrain:
    def test_zero_episodes_writes_checkpoint(self, tmp_path):
        out = tmp_path / "p.json"
        assert main(["train", "--episodes", "0", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["arch"]["policy"] == [7, 64, 64, 2]

    def test_same_seed_same_curve(self, tmp_path):
        curves = []
        for tag in "ab":
            curve = tmp_path / f"{tag}.csv"
            rc = main(["train", "--episodes", "3", "--seed", "4", "--out", str(tmp_path / f"{tag}.json"),
                       "--curve", str(curve)] + FAST)
            assert rc == 0
            curves.append(curve.read_bytes())
        assert curves[0] == curves[1]
        assert len(read_rows(tmp_path / "a.csv")) == 3

    def test_bad_learner_setting(self, tmp_path):
        assert main(["train", "--episodes", "1", "--out", str(tmp_path / "p.json"),
                     "--set", "learner.discount=1.5"]) == 2


class TestEvaluate:
    def test_parse_policy(self, tmp_path):
        assert parse_policy("heuristic:0.25") == ThresholdPolicy(0.25)
        for bad in ("heuristic:1.5", "heuristic:x", str(tmp_path / "missing.json")):
            with pytest.raises(UsageError):
                parse_policy(bad)

    def test_bad_threshold_exits_2(self, tmp_path):
        assert main(["evaluate", "--policy", "heuristic:1.5", "--out", str(tmp_path / "r.json")]) == 2

    def test_heuristic_report(self, tmp_path):
        out = tmp_path / "r.json"
        rc = main(["evaluate", "--policy", "heuristic:0.1", "--episodes", "3", "--seed", "2",
                   "--out", str(out), "--set", "env.horizon_min=600"])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["policy"] == "heuristic:0.1" and doc["mode"] == "threshold"
        assert [r["seed"] for r in doc["episodes"]] == [2, 3, 4]
        assert len(doc["histogram"]["voluntary"]) == 24

    def test_checkpoint_policy(self, tmp_path):
        ckpt = tmp_path / "p.json"
        main(["train", "--episodes", "0", "--out", str(ckpt)])
        out = tmp_path / "r.json"
        assert main(["evaluate", "--policy", str(ckpt), "--episodes", "1", "--out", str(out),
                     "--set", "env.horizon_min=300"]) == 0
        assert json.loads(out.read_text())["mode"] == "argmax"

    def test_config_file_and_env_var(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"env": {"horizon_min": 300, "emissions_weight": 0.0}}))
        monkeypatch.setenv("EV_SIM_CONFIG", str(cfg))
        out = tmp_path / "r.json"
        assert main(["evaluate", "--policy", "heuristic:0.1", "--episodes", "1", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["emissions_weight"] == 0.0

    def test_unknown_config_key(self, tmp_path):
        assert main(["evaluate", "--policy", "heuristic:0.1", "--out", str(tmp_path / "r.json"),
                     "--set", "env.nope=1"]) == 2


class TestReport:
    @pytest.fixture
    def report(self, tmp_path):
        out = tmp_path / "r.json"
        main(["evaluate", "--policy", "heuristic:0.1", "--episodes", "4", "--out", str(out),
              "--set", "env.horizon_min=600"])
        return out

    def test_csv_tables(self, tmp_path, report):
        outdir = tmp_path / "csv"
        assert main(["report", "--in", str(report), "--format", "csv", "--out", str(outdir)]) == 0
        assert len(read_rows(outdir / "histogram.csv")) == 24
        assert len(read_rows(outdir / "episodes.csv")) == 4

    def test_window_one_is_identity(self, tmp_path, report):
        curve = tmp_path / "c.csv"
        main(["train", "--episodes", "3", "--out", str(tmp_path / "p.json"), "--curve", str(curve)] + FAST)
        outdir = tmp_path / "csv"
        assert main(["report", "--in", str(report), "--out", str(outdir), "--curve", str(curve),
                     "--window", "1"]) == 0
        rows = read_rows(outdir / "curve.csv")
        assert len(rows) == len(read_rows(curve)) == 3
        assert all(r["total_reward"] == r["moving_average_1"] for r in rows)

    def test_bad_window(self, tmp_path, report):
        with pytest.raises(SystemExit) as exc:
            main(["report", "--in", str(report), "--out", str(tmp_path), "--window", "0"])
        assert exc.value.code == 2

    def test_missing_input(self, tmp_path):
        assert main(["report", "--in", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2

    def test_schema_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"version": 1}')
        assert main(["report", "--in", str(bad), "--out", str(tmp_path / "o")]) == 1


class TestEntryPoint:
    def test_help(self):
        r = subprocess.run([sys.executable, "-m", "ridecharge", "--help"], capture_output=True, text=True)
        assert r.returncode == 0
        for cmd in ("ingest", "train", "evaluate", "report", "serve"):
            assert cmd in r.stdout

    def test_unknown_flag(self):
        r = subprocess.run([sys.executable, "-m", "ridecharge", "evaluate", "--bogus"],
                           capture_output=True, text=True)
        assert r.returncode == 2

    def test_serve_port_in_use(self, env_server):
        srv = env_server()
        assert main(["serve", "--port", str(srv.port)]) == 1
