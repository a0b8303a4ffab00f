"""Command-line entry point: ingest, train, evaluate, report, serve.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from .agents import MlpParams, NetworkPolicy, ThresholdPolicy, train
from .env import RideHailEnv
from .evaluation import (SchemaError, aggregate, evaluate, read_curve, report_to_csv,
                         write_curve, write_json)
from .server import DEFAULT_PORT, serve
from .trips import ZoneGrid, ingest_trips, read_trip_csv

log = logging.getLogger("ridecharge")


class UsageError(Exception):
    pass


def parse_policy(text: str):
    """``heuristic:<lambda>`` or a checkpoint path."""
    if text.startswith("heuristic:"):
        raw = text.split(":", 1)[1]
        try:
            lam = float(raw)
        except ValueError:
            raise UsageError(f"bad threshold in {text!r}") from None
        if not 0.0 <= lam <= 1.0:
            raise UsageError(f"threshold must lie in [0, 1]: {text!r}")
        return ThresholdPolicy(lam)
    if not os.path.exists(text):
        raise UsageError(f"policy checkpoint not found: {text}")
    return text


def _require_file(path, what):
    if not path or not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def cmd_ingest(args, cfg):
    _require_file(args.trips, "trip CSV")
    if args.grid_config:
        _require_file(args.grid_config, "grid config")
        with open(args.grid_config) as fh:
            grid = ZoneGrid.from_dict(json.load(fh))
    else:
        grid = ZoneGrid.from_dict(cfg["grid"])
    model = ingest_trips(read_trip_csv(args.trips), grid, seed=args.seed)
    model.save(args.out)
    print(f"kept={model.stats.kept} dropped={model.stats.dropped} buckets={len(model.buckets)}")


def cmd_train(args, cfg):
    env_cfg = cfgmod.build_env_config(cfg)
    lc = cfgmod.build_learner_config(cfg, episodes=args.episodes, seed=args.seed,
                                     workers=args.workers)
    result = train(lambda: RideHailEnv(env_cfg), lc)
    result.params.save(args.out)
    if args.curve:
        write_curve(args.curve, result.curve)
    r = result.rewards
    if len(r):
        print(f"episodes={len(r)} first={r[:50].mean():.2f} last={r[-50:].mean():.2f}")
    else:
        print("episodes=0 (initial checkpoint written)")


def cmd_evaluate(args, cfg):
    policy = parse_policy(args.policy)
    env_cfg = cfgmod.build_env_config(cfg)
    mode = "threshold"
    if isinstance(policy, str):
        params = MlpParams.load(policy)
        mode = "sampled" if args.sampled else "argmax"
        policy = NetworkPolicy(params, deterministic=not args.sampled,
                               rng=np.random.default_rng(args.seed), label=args.policy)
    metrics = evaluate(env_cfg, policy, args.episodes, seed=args.seed, workers=args.workers)
    rep = aggregate(metrics)
    write_json(args.out, rep.to_dict(policy=args.policy, mode=mode, seed=args.seed,
                                     emissions_weight=env_cfg.emissions_weight))
    dpm = "undefined" if rep.dollars_per_mile is None else f"{rep.dollars_per_mile:.4f}"
    print(f"{args.policy}: mean_reward={rep.mean_reward:.2f} std={rep.std_reward:.2f} "
          f"dollars_per_mile={dpm}")


def cmd_report(args, cfg):
    _require_file(args.input, "report")
    if args.curve:
        _require_file(args.curve, "curve CSV")
    with open(args.input) as fh:
        doc = json.load(fh)
    curve = read_curve(args.curve) if args.curve else None
    for p in report_to_csv(doc, args.out, curve=curve, window=args.window):
        print(p)


def cmd_serve(args, cfg):
    env_cfg = cfgmod.build_env_config(cfg)
    timeout = args.idle_timeout if args.idle_timeout > 0 else None
    serve(env_cfg, host=args.host, port=args.port, idle_timeout=timeout)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON config (falls back to ${cfgmod.CONFIG_ENV_VAR})")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-key override, e.g. env.emissions_weight=0")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="ridecharge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="bin taxi trip CSV into a trip model")
    s.add_argument("--trips", required=True)
    s.add_argument("--grid-config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0, help="reservoir sampling seed")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", parents=[common], help="train the network policy")
    s.add_argument("--episodes", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--curve")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="run seeded evaluation episodes")
    s.add_argument("--policy", required=True, help="heuristic:<lambda> or checkpoint path")
    s.add_argument("--episodes", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--sampled", action="store_true", help="sample network actions instead of argmax")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", parents=[common], help="convert a report to CSV tables")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--format", choices=["csv"], default="csv")
    s.add_argument("--out", required=True)
    s.add_argument("--curve", help="training curve CSV to smooth")
    s.add_argument("--window", type=int, default=50)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("serve", parents=[common], help="serve the env over TCP")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=DEFAULT_PORT)
    s.add_argument("--idle-timeout", type=float, default=300.0)
    s.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "window", 1) < 1:
        parser.error("--window must be >= 1")
    try:
        cfg = cfgmod.load_config(args.config, args.set)
        args.func(args, cfg)
    except (UsageError, cfgmod.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, SchemaError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
