"""Command line entry point: ``fedlsgan {run,sweep,evaluate,synth}``.

Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment, metrics
from .config import ConfigError, ExperimentConfig, load_config

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

log = logging.getLogger("fedlsgan")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = args.out
    return cfg.model_copy(update=updates) if updates else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    result = experiment.run_experiment(cfg, render=args.render_plots)
    summary = result.report["summary"]
    print(json.dumps({k: v["mean"] for k, v in summary.items()}, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rows = experiment.run_sweep(cfg, args.K, args.E)
    failed = sorted({(r["K"], r["E"]) for r in rows if r["status"] != "ok"})
    for K, E in failed:
        print(f"setting K={K} E={E:g} failed", file=sys.stderr)
    print(f"wrote {Path(cfg.out_dir) / 'sweep.csv'}")
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_evaluate(args) -> int:
    real = experiment.read_scenario_csv(args.real_csv)
    gen = experiment.read_scenario_csv(args.gen_csv)
    if real.shape[1] != gen.shape[1]:
        print(f"error: width mismatch ({real.shape[1]} vs {gen.shape[1]} columns)", file=sys.stderr)
        return EXIT_USAGE
    leads = args.leads if args.leads is not None else list(range(0, real.shape[1], 12))
    spec = metrics.EvalSpec(n_generated=len(gen), k=args.k, leads=tuple(leads),
                            max_lag=args.max_lag, seed=args.seed)
    k = min(spec.k, len(real), len(gen))
    spec = metrics.EvalSpec(spec.n_generated, k, spec.leads, spec.max_lag, spec.seed)
    report = metrics.evaluate(real, gen, spec)
    text = report.to_json(indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _load(args)
    if cfg.data.synthetic is None:
        raise ConfigError("synth needs a config with a data.synthetic section")
    for p in experiment.write_synthetic(cfg, cfg.out_dir):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedlsgan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (YAML or JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the config output directory")

    p = sub.add_parser("run", help="train, generate and evaluate one configured method")
    common(p)
    p.add_argument("--render-plots", action="store_true", help="also write PNG figures")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="robustness sweep over synchronization interval and client fraction")
    common(p)
    p.add_argument("--K", type=_int_list, default=[50, 100, 200], help="comma separated intervals")
    p.add_argument("--E", type=_float_list, default=[0.5, 1.0], help="comma separated fractions")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="score a generated scenario CSV against a real one")
    p.add_argument("real_csv")
    p.add_argument("gen_csv")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--max-lag", type=int, default=48)
    p.add_argument("--leads", type=_int_list)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="write the configured synthetic fleet as CSV files")
    common(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except experiment.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if args.command == "evaluate" else EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
