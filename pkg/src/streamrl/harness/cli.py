"""Command line entry point: ``streamrl {run,toy,sweep,report}``.

Config keys are passed as flags, ``--optim.lr 3e-3`` or ``--optim.lr=3e-3``.
Environment variables ``STREAMRL_<SECTION>__<KEY>`` (``STREAMRL_TOY_<KEY>`` for
the toy verb) sit between the config file and the flags in precedence.

Exit status is 0 whenever the requested work completed, even if some runs
were recorded as failed; 2 for configuration errors and 3 for I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigurationError
from . import runner
from .config import ExperimentConfig, build, parse_experiment
from .toy import ToyProblemConfig, run_toy, write_trajectory

EXIT_CONFIG = 2
EXIT_IO = 3


def parse_key_flags(extra: list[str]) -> list[tuple[str, str]]:
    """Turn leftover ``--key value`` / ``--key=value`` tokens into (key, value) pairs."""
    pairs = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigurationError(f"unexpected argument {tok!r}")
        body = tok[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigurationError(f"flag {tok} needs a value")
            key, value = body, extra[i + 1]
            i += 2
        pairs.append((key.replace("-", "_"), value))
    return pairs


def parse_axis(text: str) -> tuple[str, list]:
    """``key=[v1, v2]`` (JSON list) or ``key=v1,v2``."""
    if "=" not in text:
        raise ConfigurationError(f"axis must look like key=[values], got {text!r}")
    key, raw = text.split("=", 1)
    raw = raw.strip()
    try:
        values = json.loads(raw) if raw.startswith("[") else [v.strip() for v in raw.split(",") if v.strip()]
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"bad axis values for {key}: {exc}") from None
    if not isinstance(values, list):
        raise ConfigurationError(f"axis {key} must be a list")
    return key.strip(), [json.dumps(v) if isinstance(v, list) else v for v in values]


def _read(path) -> str:
    return Path(path).read_text() if path else ""


def _experiment(args, extra) -> ExperimentConfig:
    overrides = parse_key_flags(extra)
    if args.envs:
        overrides.insert(0, ("env.names", args.envs))
    return parse_experiment(_read(args.config), overrides)


def cmd_run(args, extra) -> int:
    cfg = _experiment(args, extra)
    results = runner.run_grid(cfg)
    failed = sum(r.status != "ok" for r in results)
    print(f"{len(results)} runs written to {cfg.run.output_dir} ({failed} failed)")
    return 0


def cmd_toy(args, extra) -> int:
    cfg = build(ToyProblemConfig, _read(args.config), parse_key_flags(extra), env_prefix="STREAMRL_TOY_")
    rows = run_toy(cfg)
    if not cfg.output:
        write_trajectory(rows, sys.stdout)
    return 0


def cmd_sweep(args, extra) -> int:
    cfg = _experiment(args, extra)
    axes = dict(parse_axis(a) for a in args.axis)
    rows = runner.run_sweep(cfg, axes, output=args.output, window=args.window)
    print(f"{len(rows)} sweep cells written")
    return 0


def cmd_report(args, extra) -> int:
    if extra:
        raise ConfigurationError(f"unexpected arguments {extra}")
    baselines = runner.read_baselines(args.baselines) if args.baselines else None
    rows, _ = runner.report(args.eval_csv, baselines, window=args.window, resamples=args.resamples,
                            level=args.level, seed=args.seed, runs_paths=args.runs, output=args.output)
    if not args.output:
        sys.stdout.write(runner._csv_text(runner.REPORT_COLUMNS, rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamrl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="train an (env x seed) grid for one algorithm")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--envs", help="comma separated environment names (same as --env.names)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("toy", help="two-parameter Adam trajectories")
    p.add_argument("--config")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("sweep", help="Cartesian hyperparameter sweep")
    p.add_argument("--config")
    p.add_argument("--envs")
    p.add_argument("--axis", action="append", default=[], help="key=[v1,v2,...]; repeatable")
    p.add_argument("--output", help="sweep CSV path (default <run.output_dir>/sweep.csv)")
    p.add_argument("--window", type=int, help="evaluations per run in the aggregate")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate eval CSVs")
    p.add_argument("eval_csv", nargs="+")
    p.add_argument("--baselines", help="CSV of env, random, reference")
    p.add_argument("--runs", action="append", default=[], help="runs.csv to list run status; repeatable")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--resamples", type=int, default=2000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, extra)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
