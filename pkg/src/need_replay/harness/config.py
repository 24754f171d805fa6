"""Experiment configuration: JSON files with flat keys, overridable from the CLI."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..agents.cliffwalk import SCHEMES
from ..errors import ConfigError

EXPERIMENTS = ("maze", "cliffwalk", "sr-heatmap", "toy-persr")

ALGORITHMS = {
    "maze": ("ps", "ps-sr"),
    "cliffwalk": SCHEMES,
    "sr-heatmap": ("td-lambda",),
    "toy-persr": ("per", "per-sr"),
}

# per-experiment values for every field left unset
DEFAULTS = {
    "maze": dict(trials=50, episodes=50, gamma=0.95, lam=0.5, epsilon=0.1, step_size=0.5,
                 sr_lr=0.1, n_planning=5, theta_ps=1e-4),
    "cliffwalk": dict(trials=10, n_states=list(range(3, 14)), gamma=0.9, lam=0.95,
                      alpha_exp=0.6, beta=0.0, step_size=0.25, sr_lr=0.1, epsilon=0.1,
                      budget=10_000_000, threshold=1e-3),
    "sr-heatmap": dict(trials=1, lambdas=[0.0, 1.0], checkpoints=[1, 10, 30, 100],
                       gamma=0.95, sr_lr=0.1, epsilon=0.1),
    "toy-persr": dict(trials=20, n_states=[5], gamma=0.9, alpha_exp=0.6, beta=0.0,
                      step_size=0.25, sr_lr=0.05, epsilon=0.5, minibatch=4,
                      budget=1_000_000, threshold=1e-3),
}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.  ``None`` means "experiment default"."""

    experiment: str = "maze"
    algorithms: list[str] | None = None
    trials: int | None = None
    episodes: int | None = None
    seed: int = 0
    out: str = "results"
    gamma: float | None = None
    lam: float | None = None
    alpha_exp: float | None = None
    beta: float | None = None
    epsilon: float | None = None
    step_size: float | None = None
    sr_lr: float | None = None
    n_planning: int | None = None
    theta_ps: float | None = None
    minibatch: int | None = None
    n_states: list[int] | None = None
    budget: int | None = None
    threshold: float | None = None
    lambdas: list[float] | None = None
    checkpoints: list[int] | None = None
    maze_file: str | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError("config", f"file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a JSON object")
        return cls.from_mapping(data)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def resolved(self) -> "ExperimentConfig":
        """Copy with experiment defaults filled in, validated."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {self.experiment!r}")
        filled = {k: v for k, v in DEFAULTS[self.experiment].items() if getattr(self, k) is None}
        if self.algorithms is None:
            filled["algorithms"] = list(ALGORITHMS[self.experiment])
        cfg = dataclasses.replace(self, **filled)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        allowed = ALGORITHMS[self.experiment]
        if not self.algorithms:
            raise ConfigError("algorithms", "at least one algorithm is required")
        for name in self.algorithms:
            if name not in allowed:
                raise ConfigError("algorithms", f"{name!r} is not one of {allowed}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        _positive_int(self, "trials")
        if self.experiment == "maze":
            _positive_int(self, "episodes")
            _positive_int(self, "n_planning")
        if self.experiment in ("cliffwalk", "toy-persr"):
            _positive_int(self, "budget")
            if not self.n_states or any(not isinstance(n, int) or n < 2 for n in self.n_states):
                raise ConfigError("n_states", "must be a non-empty list of integers >= 2")
        if self.experiment == "toy-persr":
            _positive_int(self, "minibatch")
        if self.gamma is not None and not 0 < self.gamma < 1:
            raise ConfigError("gamma", "must lie in (0, 1)")
        for name in ("lam", "alpha_exp", "epsilon"):
            value = getattr(self, name)
            if value is not None and not 0 <= value <= 1:
                raise ConfigError(name, "must lie in [0, 1]")
        for name in ("beta", "step_size", "sr_lr", "theta_ps", "threshold"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(name, "must be non-negative")
        if self.experiment == "sr-heatmap":
            if not self.lambdas or any(not 0 <= v <= 1 for v in self.lambdas):
                raise ConfigError("lambdas", "must be a non-empty list of values in [0, 1]")
            if not self.checkpoints or any(not isinstance(c, int) or c < 1 for c in self.checkpoints):
                raise ConfigError("checkpoints", "must be a non-empty list of positive integers")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _positive_int(cfg: ExperimentConfig, name: str) -> None:
    value = getattr(cfg, name)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(name, f"must be a positive integer, got {value!r}")
