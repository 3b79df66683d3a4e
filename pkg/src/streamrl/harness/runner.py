"""Training grids, sweeps and reports.

Output layout of :func:`run_grid` under ``run.output_dir``::

    <algorithm>/<env>/seed<k>/train.csv   step, delta, loss, update_norm
    <algorithm>/<env>/seed<k>/eval.csv    algorithm, env, seed, step, eval_return
    eval.csv                              all per-run eval rows, grid order
    runs.csv                              algorithm, env, seed, status, steps, message
    config.txt                            the resolved configuration

Runs that hit a numeric or environment fault are kept: their status is
``failed`` and ``steps`` records how far they got.
"""

from __future__ import annotations

import copy
import csv
import io
import itertools
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import evalstats
from ..agents import Transition, make_agent, run_episode
from ..envs import NormalizeObservation, TimeLimit, make_env, wrap
from ..errors import ConfigurationError, EnvironmentFault, NumericFault
from .config import ExperimentConfig, set_key, to_text

log = logging.getLogger(__name__)

EVAL_COLUMNS = ["algorithm", "env", "seed", "step", "eval_return"]
TRAIN_COLUMNS = ["step", "delta", "loss", "update_norm"]
RUN_COLUMNS = ["algorithm", "env", "seed", "status", "steps", "message"]
REPORT_COLUMNS = ["algorithm", "metric", "point", "ci_low", "ci_high"]


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


@dataclass
class RunResult:
    algorithm: str
    env: str
    seed: int
    status: str
    steps: int
    message: str
    eval_rows: list
    train_rows: list


def _make_envs(config: ExperimentConfig, name: str):
    params = config.env.params_for(name)
    train_base = make_env(name, **params)
    train = wrap(train_base, config.agent.gamma, config.env.max_episode_steps,
                 config.env.normalize_obs, config.env.scale_reward)
    # evaluation sees the training observation statistics but never updates them
    eval_env = make_env(name, **config.env.params_for(name))
    if config.env.max_episode_steps:
        eval_env = TimeLimit(eval_env, config.env.max_episode_steps)
    if isinstance(train, NormalizeObservation):
        eval_env = NormalizeObservation(eval_env)
        eval_env.stats = train.stats
        eval_env.training = False
    return train, eval_env


def _eval_points(total: int, every: int) -> list[int]:
    points = list(range(every, total + 1, every))
    if not points or points[-1] != total:
        points.append(total)
    return points


def run_single(config: ExperimentConfig, env_name: str, seed: int) -> RunResult:
    """Train one agent on one environment, evaluating on a schedule."""
    run = config.run
    algorithm = config.agent.algorithm
    explore_ss, env_ss, eval_ss = np.random.SeedSequence(seed).spawn(3)
    explore_rng = np.random.default_rng(explore_ss)
    env_rng = np.random.default_rng(env_ss)
    eval_rng = np.random.default_rng(eval_ss)

    eval_rows, train_rows = [], []
    step = 0
    train_env = eval_env = None
    try:
        train_env, eval_env = _make_envs(config, env_name)
        agent = make_agent(config.agent_config(seed), train_env.spec.observation_dim,
                           train_env.spec.action_count, explore_rng)
        obs = train_env.reset(int(env_rng.integers(2**31)))
        for point in _eval_points(run.total_steps, run.eval_every):
            while step < point:
                if step == run.inject_nan_step:
                    agent.params[0] = np.nan
                    agent.params_changed()
                action, greedy = agent.act(obs, step)
                result = train_env.step(action)
                try:
                    rep = agent.observe(Transition.from_step(obs, action, greedy, result))
                except NumericFault as fault:
                    fault.step = step
                    raise
                step += 1
                if step % run.log_every == 0:
                    train_rows.append((step, rep.delta, rep.loss, rep.update_norm))
                obs = result.obs
                if result.terminal:
                    obs = train_env.reset(int(env_rng.integers(2**31)))
            returns = [
                run_episode(agent, eval_env, eval_rng, seed=int(eval_rng.integers(2**31)),
                            learn=False, epsilon=run.eval_epsilon).episode_return
                for _ in range(run.eval_episodes)
            ]
            if returns:
                eval_rows.append((algorithm, env_name, seed, step, float(np.mean(returns))))
        status, message = "ok", ""
    except (NumericFault, EnvironmentFault) as exc:
        status, message = "failed", f"{type(exc).__name__}: {exc}"
        log.warning("run %s/%s/seed%d failed at step %d: %s", algorithm, env_name, seed, step, message)
    finally:
        for env in (train_env, eval_env):
            if env is not None:
                env.close()
    return RunResult(algorithm, env_name, seed, status, step, message, eval_rows, train_rows)


def run_grid(config: ExperimentConfig) -> list[RunResult]:
    """Every (environment, seed) pair of the config, written under ``run.output_dir``."""
    config.validate()
    out = Path(config.run.output_dir)
    results = []
    for env_name in config.env.names:
        for seed in config.run.seeds:
            result = run_single(config, env_name, seed)
            run_dir = out / result.algorithm / env_name / f"seed{seed}"
            write_atomic(run_dir / "train.csv", _csv_text(TRAIN_COLUMNS, result.train_rows))
            write_atomic(run_dir / "eval.csv", _csv_text(EVAL_COLUMNS, result.eval_rows))
            results.append(result)
    write_atomic(out / "eval.csv", _csv_text(EVAL_COLUMNS, [r for res in results for r in res.eval_rows]))
    write_atomic(out / "runs.csv", _csv_text(
        RUN_COLUMNS, [(r.algorithm, r.env, r.seed, r.status, r.steps, r.message) for r in results]))
    write_atomic(out / "config.txt", to_text(config))
    return results


# -- reading results back --------------------------------------------------------


def read_eval_csv(path) -> list[evalstats.RunRecord]:
    """Group an eval CSV into per-(algorithm, env, seed) records, keyed by algorithm."""
    series: dict[tuple[str, str, int], list[tuple[int, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["algorithm"], row["env"], int(row["seed"]))
            series.setdefault(key, []).append((int(row["step"]), float(row["eval_return"])))
    records = []
    for (algorithm, env, seed), pts in series.items():
        pts.sort()
        rec = evalstats.RunRecord(env, seed, tuple(p[0] for p in pts), tuple(p[1] for p in pts))
        records.append((algorithm, rec))
    return records


def read_runs_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_baselines(path) -> dict[str, tuple[float, float]]:
    baselines = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            baselines[row["env"]] = (float(row["random"]), float(row["reference"]))
    return baselines


def _score_matrices(records, baselines, window):
    """algorithm -> env -> per-run tail-mean score (normalised when baselines are given)."""
    raw: dict[str, dict[str, list[float]]] = {}
    for algorithm, rec in sorted(records, key=lambda r: (r[0], r[1].env_name, r[1].seed)):
        raw.setdefault(algorithm, {}).setdefault(rec.env_name, []).append(rec.tail_mean(window))
    if baselines is None:
        return {a: {e: np.asarray(v) for e, v in envs.items()} for a, envs in raw.items()}
    return {a: evalstats.normalize_scores(envs, baselines) for a, envs in raw.items()}


def report(eval_paths, baselines=None, window: int = 10, resamples: int = 2000, level: float = 0.95,
           seed: int = 0, runs_paths=(), output=None):
    """Aggregate eval CSVs into IQM/mean with stratified-bootstrap CIs plus pairwise PoI rows.

    Returns ``(aggregate_rows, run_rows)``. Every run listed in ``runs_paths``
    appears exactly once in ``run_rows`` with its status.
    """
    records = [r for p in eval_paths for r in read_eval_csv(p)]
    matrices = _score_matrices(records, baselines, window)
    rows = []
    for algorithm in sorted(matrices):
        m = matrices[algorithm]
        for metric, stat in (("iqm", evalstats.pooled_iqm), ("mean", evalstats.pooled_mean)):
            ci = evalstats.stratified_bootstrap_ci(m, stat, resamples, level, np.random.default_rng(seed))
            rows.append((algorithm, metric, stat(m), ci.low, ci.high))
    for x, y in itertools.permutations(sorted(matrices), 2):
        if set(matrices[x]) != set(matrices[y]):
            continue
        point = evalstats.probability_of_improvement(matrices[x], matrices[y])
        rows.append((x, f"poi_vs:{y}", point, "", ""))

    run_rows = []
    seen = set()
    for p in runs_paths:
        for r in read_runs_csv(p):
            key = (r["algorithm"], r["env"], r["seed"])
            if key in seen:
                continue
            seen.add(key)
            run_rows.append((r["algorithm"], r["env"], r["seed"], r["status"], r["steps"], r["message"]))
    if output:
        out = Path(output)
        write_atomic(out, _csv_text(REPORT_COLUMNS, rows))
        if run_rows:
            write_atomic(out.with_name(out.stem + "_runs.csv"), _csv_text(RUN_COLUMNS, run_rows))
    return rows, run_rows


# -- sweeps ------------------------------------------------------------------------


def run_sweep(base: ExperimentConfig, axes: dict[str, list], output=None, window: int | None = None) -> list[tuple]:
    """Cartesian product over ``axes`` (dotted key -> values); one aggregate row per cell.

    Each cell is a full :func:`run_grid` in ``<output_dir>/cell<i>``; its row holds
    the IQM of the last ``window`` evaluations pooled over environments and seeds.
    """
    if not axes:
        raise ConfigurationError("a sweep needs at least one axis")
    for key, values in axes.items():
        if not values:
            raise ConfigurationError(f"sweep axis {key!r} is empty")
    window = window or base.run.eval_window
    keys = list(axes)
    root = Path(base.run.output_dir)
    rows = []
    for i, combo in enumerate(itertools.product(*(axes[k] for k in keys))):
        cfg = copy.deepcopy(base)
        for key, value in zip(keys, combo):
            set_key(cfg, key, value if isinstance(value, str) else fmt(value))
        cfg.run.output_dir = str(root / f"cell{i:03d}")
        cfg.validate()
        results = run_grid(cfg)
        tail = [ret for res in results for *_, ret in res.eval_rows[-window:]]
        failures = sum(res.status != "ok" for res in results)
        point = evalstats.iqm(tail) if tail else float("nan")
        rows.append((i, *combo, point, len(tail), failures))
    if output is None:
        output = root / "sweep.csv"
    write_atomic(Path(output), _csv_text(["cell", *keys, "iqm", "n_samples", "failed_runs"], rows))
    return rows
