"""Seeded multi-trial orchestration and CSV output.

Every (algorithm, trial) cell gets its own generator seeded with
``base_seed + trial`` and owns all of its agent and environment state, so
cells can run in any order or concurrently.  Results are always merged and
written in trial order, which keeps the CSV bytes a pure function of the
configuration.
"""

from __future__ import annotations

import csv
import json
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..agents.cliffwalk import CliffwalkConfig, cliffwalk_run
from ..agents.per_sr import ToyConfig, toy_run
from ..agents.sweeping import PrioritizedSweepingAgent
from ..envs import DynaMaze, maze_shortest_path_policy
from ..sr_tabular import deterministic_policy, learn_sr_fixed_policy, write_grid_csv
from .config import ExperimentConfig

THREADS_ENV = "NEED_REPLAY_THREADS"


@dataclass
class RunSummary:
    """Raw per-cell rows, aggregate rows and the files written."""

    experiment: str
    raw: list[dict]
    aggregates: list[dict]
    files: list[Path] = field(default_factory=list)


def thread_count() -> int:
    value = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def parallel_map(fn, items) -> list:
    """``[fn(x) for x in items]`` in input order, fanned out over a thread pool."""
    items = list(items)
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def describe(values) -> dict:
    values = [float(v) for v in values]
    n = len(values)
    stderr = statistics.stdev(values) / math.sqrt(n) if n > 1 else 0.0
    return {"trials": n, "mean": statistics.fmean(values), "median": statistics.median(values),
            "stderr": stderr}


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in columns})
    return path


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _load_maze(cfg: ExperimentConfig, rng) -> DynaMaze:
    if cfg.maze_file:
        return DynaMaze.from_file(cfg.maze_file, gamma=cfg.gamma, rng=rng)
    return DynaMaze(gamma=cfg.gamma, rng=rng)


# -- maze ---------------------------------------------------------------------

def maze_trial(cfg: ExperimentConfig, algorithm: str, trial: int) -> list[int]:
    """Steps per episode for one PS or PS-SR agent."""
    rng = np.random.default_rng(cfg.seed + trial)
    env = _load_maze(cfg, rng)
    agent = PrioritizedSweepingAgent(
        env, use_need=(algorithm == "ps-sr"), n_planning=cfg.n_planning, alpha=cfg.step_size,
        gamma=cfg.gamma, epsilon=cfg.epsilon, theta=cfg.theta_ps, lam=cfg.lam,
        sr_lr=cfg.sr_lr, rng=rng)
    return [agent.run_episode() for _ in range(cfg.episodes)]


def run_maze(cfg: ExperimentConfig, out: Path) -> RunSummary:
    cells = [(a, t) for a in cfg.algorithms for t in range(cfg.trials)]
    results = parallel_map(lambda cell: maze_trial(cfg, *cell), cells)
    raw = [{"trial": t, "episode": e + 1, "algorithm": a, "steps": steps}
           for (a, t), curve in zip(cells, results) for e, steps in enumerate(curve)]
    aggregates = []
    for a in cfg.algorithms:
        curves = [curve for (alg, _), curve in zip(cells, results) if alg == a]
        for e in range(cfg.episodes):
            aggregates.append({"algorithm": a, "episode": e + 1,
                               **describe(c[e] for c in curves)})
    files = [
        write_csv(out / "maze_raw.csv", ["trial", "episode", "algorithm", "steps"], raw),
        write_csv(out / "maze_summary.csv",
                  ["algorithm", "episode", "trials", "mean", "median", "stderr"], aggregates),
    ]
    return RunSummary("maze", raw, aggregates, files)


# -- cliffwalk ----------------------------------------------------------------

def cliffwalk_config(cfg: ExperimentConfig) -> CliffwalkConfig:
    return CliffwalkConfig(gamma=cfg.gamma, step_size=cfg.step_size, alpha=cfg.alpha_exp,
                           beta=cfg.beta, lam=cfg.lam, sr_lr=cfg.sr_lr,
                           walker_epsilon=cfg.epsilon, threshold=cfg.threshold,
                           budget=cfg.budget)


def run_cliffwalk(cfg: ExperimentConfig, out: Path) -> RunSummary:
    learner_cfg = cliffwalk_config(cfg)
    cells = [(s, n, t) for n in cfg.n_states for s in cfg.algorithms for t in range(cfg.trials)]
    results = parallel_map(lambda c: cliffwalk_run(c[0], c[1], cfg.seed + c[2], learner_cfg), cells)
    raw = [{"scheme": r.scheme, "n": r.n, "seed": r.seed, "q_updates": r.q_updates,
            "converged": int(r.converged)} for r in results]
    aggregates = []
    for n in cfg.n_states:
        for s in cfg.algorithms:
            counts = [r["q_updates"] for r in raw if r["n"] == n and r["scheme"] == s]
            aggregates.append({"scheme": s, "n": n, **describe(counts)})
    files = [
        write_csv(out / "cliffwalk_raw.csv", ["scheme", "n", "seed", "q_updates", "converged"], raw),
        write_csv(out / "cliffwalk_summary.csv",
                  ["scheme", "n", "trials", "mean", "median", "stderr"], aggregates),
    ]
    return RunSummary("cliffwalk", raw, aggregates, files)


# -- SR heatmaps ----------------------------------------------------------------

def heatmap_policy(maze: DynaMaze, epsilon: float) -> np.ndarray:
    """Epsilon-soft shortest-path policy: the fixed behaviour the heatmaps are learned under."""
    greedy = deterministic_policy(maze_shortest_path_policy(maze), maze.action_count)
    return greedy * (1.0 - epsilon) + epsilon / maze.action_count


def run_sr_heatmap(cfg: ExperimentConfig, out: Path) -> RunSummary:
    rng_probe = np.random.default_rng(cfg.seed)
    maze = _load_maze(cfg, rng_probe)
    policy = heatmap_policy(maze, cfg.epsilon)
    checkpoints = sorted(set(cfg.checkpoints) | {0})
    raw, files = [], []
    for trial in range(cfg.trials):
        for lam in cfg.lambdas:
            rng = np.random.default_rng(cfg.seed + trial)
            _, snaps, _ = learn_sr_fixed_policy(maze, policy, max(checkpoints), lam, cfg.sr_lr,
                                                rng, gamma=cfg.gamma, checkpoints=checkpoints)
            for episode in checkpoints:
                grid = np.maximum(snaps[episode][maze.start_state], 0.0).reshape(maze.rows, maze.cols)
                name = f"sr_heatmap_trial{trial}_lambda{lam:g}_ep{episode}.csv"
                write_grid_csv(grid, out / name)
                files.append(out / name)
                raw.append({"trial": trial, "lambda": lam, "episode": episode,
                            "file": name, "total": float(grid.sum())})
    files.append(write_csv(out / "sr_heatmap_index.csv",
                           ["trial", "lambda", "episode", "file", "total"], raw))
    return RunSummary("sr-heatmap", raw, [], files)


# -- toy PER-SR -----------------------------------------------------------------

def toy_config(cfg: ExperimentConfig, n_states: int) -> ToyConfig:
    return ToyConfig(n_states=n_states, gamma=cfg.gamma, step_size=cfg.step_size,
                     sr_lr=cfg.sr_lr, alpha=cfg.alpha_exp, beta=cfg.beta,
                     minibatch=cfg.minibatch, epsilon=cfg.epsilon, threshold=cfg.threshold,
                     budget=cfg.budget)


def run_toy(cfg: ExperimentConfig, out: Path) -> RunSummary:
    cells = [(a, n, t) for n in cfg.n_states for a in cfg.algorithms for t in range(cfg.trials)]
    results = parallel_map(lambda c: toy_run(c[0], cfg.seed + c[2], toy_config(cfg, c[1])), cells)
    raw = [{"algorithm": r.algorithm, "n": c[1], "seed": r.seed, "q_updates": r.q_updates,
            "converged": int(r.converged)} for c, r in zip(cells, results)]
    aggregates = []
    for n in cfg.n_states:
        for a in cfg.algorithms:
            counts = [r["q_updates"] for r in raw if r["n"] == n and r["algorithm"] == a]
            aggregates.append({"algorithm": a, "n": n, **describe(counts)})
    files = [
        write_csv(out / "toy_persr_raw.csv", ["algorithm", "n", "seed", "q_updates", "converged"], raw),
        write_csv(out / "toy_persr_summary.csv",
                  ["algorithm", "n", "trials", "mean", "median", "stderr"], aggregates),
    ]
    return RunSummary("toy-persr", raw, aggregates, files)


RUNNERS = {"maze": run_maze, "cliffwalk": run_cliffwalk, "sr-heatmap": run_sr_heatmap,
           "toy-persr": run_toy}


def run_experiment(config: ExperimentConfig) -> RunSummary:
    """Run every cell of ``config`` and write its CSVs plus the resolved config."""
    cfg = config.resolved()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = RUNNERS[cfg.experiment](cfg, out)
    config_path = out / f"{cfg.experiment}_config.json"
    config_path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    summary.files.append(config_path)
    return summary
