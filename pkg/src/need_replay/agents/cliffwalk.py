"""Replay-only learning on the Blind Cliffwalk.

The replay memory is filled once with the transitions of every one of the
2**n action sequences; afterwards a linear Q-function is trained purely from
replay until its mean squared error to the true action values drops below a
threshold.  Schemes differ only in which stored transition is replayed next:

``uniform``       every stored transition equally likely
``per``           proportional to ``|delta| ** alpha``
``need``          proportional to ``(|delta| * need) ** alpha`` with the need
                  read from a tabular SR learned by TD(lambda)
``random_need``   same, with the SR of the uniform-random policy (never learned)
``optimal_need``  same, with the SR of the current greedy policy
``oracle``        the stored (state, action) whose update is largest

Need is measured from the state an agent walking the chain with an
epsilon-greedy policy most recently acted in; one environment step is taken
per replayed transition and nothing it observes is added to memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs import BlindCliffwalk, cliffwalk_ground_truth_q
from ..errors import NoMassError
from ..replay_core import ProportionalSampler, importance_weight
from ..sr_tabular import (SRMatrix, deterministic_policy, policy_transition_matrix,
                          sr_closed_form, sr_init_uniform, uniform_policy)
from .tabular import LinearQ, epsilon_greedy

SCHEMES = ("uniform", "oracle", "per", "need", "random_need", "optimal_need")
NEED_SCHEMES = ("need", "random_need", "optimal_need")


@dataclass
class CliffwalkResult:
    scheme: str
    n: int
    seed: int
    q_updates: int
    converged: bool
    final_mse: float


@dataclass
class CliffwalkConfig:
    gamma: float = 0.9
    step_size: float = 0.25
    alpha: float = 0.6
    beta: float = 0.0
    lam: float = 0.95
    sr_lr: float = 0.1
    walker_epsilon: float = 0.1
    threshold: float = 1e-3
    budget: int = 10_000_000
    min_priority: float = 1e-8
    fall_terminates: bool = True
    need_from: str = "previous"
    minibatch: int = 1


class ReplayMemory:
    """Column-wise store of the prefilled transitions."""

    def __init__(self, transitions):
        cols = list(zip(*transitions))
        self.states = np.array(cols[0], dtype=int)
        self.actions = np.array(cols[1], dtype=int)
        self.rewards = np.array(cols[2], dtype=float)
        self.next_states = np.array(cols[3], dtype=int)
        self.terminals = np.array(cols[4], dtype=bool)

    def __len__(self) -> int:
        return self.states.size

    def item(self, j: int):
        return (int(self.states[j]), int(self.actions[j]), float(self.rewards[j]),
                int(self.next_states[j]), bool(self.terminals[j]))


def need_weighted_probabilities(priorities, needs, alpha: float) -> np.ndarray:
    """Sampling distribution ``(p_j * need_j)**alpha / sum_i (p_i * need_i)**alpha``.

    Normalization runs over every stored item.
    """
    mass = (np.asarray(priorities, dtype=float) * np.asarray(needs, dtype=float)) ** alpha
    total = mass.sum()
    if total <= 0.0:
        raise NoMassError("no stored transition has positive priority times need")
    return mass / total


class _Walker:
    """Epsilon-greedy agent stepping the chain to supply the need reference state."""

    def __init__(self, env: BlindCliffwalk, q: LinearQ, rng, sr: SRMatrix | None):
        self.env = env
        self.q = q
        self.rng = rng
        self.sr = sr
        self.state = env.reset()
        if sr is not None:
            sr.start_episode()

    def step(self) -> int:
        """Act once and return the state the action was taken from."""
        s = self.state
        self.previous = s
        a = epsilon_greedy(self.q, s, self.rng)
        nxt, _, terminal = self.env.step(a)
        if self.sr is not None:
            self.sr.update(s, nxt, terminal)
        if terminal:
            self.state = self.env.reset()
            if self.sr is not None:
                self.sr.start_episode()
        else:
            self.state = nxt
        return s


class CliffwalkLearner:
    """Replay-only learner for one (scheme, n, seed) cell."""

    def __init__(self, scheme: str, n: int, seed: int, config: CliffwalkConfig | None = None):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        self.scheme = scheme
        self.n = n
        self.seed = seed
        self.config = config = config or CliffwalkConfig()
        self.rng = np.random.default_rng(seed)
        self.env = BlindCliffwalk(n, config.gamma, config.fall_terminates)
        self.memory = ReplayMemory(list(self.env.transitions_from_all_sequences()))
        self.q = LinearQ(n, 2, config.gamma, epsilon=config.walker_epsilon)
        self.q_star = cliffwalk_ground_truth_q(n, config.gamma, config.fall_terminates)
        self._sq_err = (self.q.theta - self.q_star.ravel()) ** 2
        self._sq_sum = float(self._sq_err.sum())
        self.q_updates = 0

        size = len(self.memory)
        self.priorities = np.ones(size)
        self.sampler = None
        if scheme in ("uniform", "per"):
            alpha = 0.0 if scheme == "uniform" else config.alpha
            self.sampler = ProportionalSampler(size, alpha, config.min_priority)
            for _ in range(size):
                self.sampler.add()

        self.sr = None
        self.fixed_M = None
        if scheme == "need":
            self.sr = sr_init_uniform(self.env, config.gamma, config.lam, config.sr_lr)
        elif scheme == "random_need":
            self.fixed_M = sr_closed_form(
                policy_transition_matrix(self.env, uniform_policy(self.env)), config.gamma)
        self.walker = _Walker(self.env, self.q, self.rng, self.sr) if scheme in NEED_SCHEMES else None
        if scheme == "oracle":
            keys = {}
            for j in range(size):
                keys.setdefault((int(self.memory.states[j]), int(self.memory.actions[j])), j)
            self._oracle_items = [keys[k] for k in sorted(keys)]

    # -- bookkeeping ---------------------------------------------------------

    @property
    def mse(self) -> float:
        return self._sq_sum / self._sq_err.size

    def _apply(self, j: int, weight: float = 1.0) -> float:
        s, a, r, nxt, term = self.memory.item(j)
        delta = self.q.td_error(s, a, r, nxt, term)
        self._shift(self.q.index(s, a), self.config.step_size * weight * delta)
        return delta

    def _shift(self, i: int, amount: float) -> None:
        self.q.theta[i] += amount
        new_err = (self.q.theta[i] - self.q_star.flat[i]) ** 2
        self._sq_sum += new_err - self._sq_err[i]
        self._sq_err[i] = new_err
        self.q_updates += 1

    def _need_matrix(self) -> np.ndarray:
        if self.scheme == "need":
            return np.maximum(self.sr.M, 0.0)
        if self.scheme == "random_need":
            return self.fixed_M
        greedy = [self.q.greedy(s) for s in range(self.n)]
        T = policy_transition_matrix(self.env, deterministic_policy(greedy, 2))
        return sr_closed_form(T, self.config.gamma)

    # -- one replay per scheme -----------------------------------------------

    def replay_once(self) -> None:
        scheme = self.scheme
        if scheme == "oracle":
            self._replay_oracle()
        elif self.sampler is not None:
            j = self.sampler.sample(self.rng)
            weight = 1.0
            if self.config.beta > 0.0:
                weight = self._sampler_weight(j)
            delta = self._apply(j, weight)
            self.sampler.update(j, abs(delta))
        else:
            self._replay_need_batch()

    def _replay_need_batch(self) -> None:
        cfg = self.config
        reference = self.walker.step()
        if cfg.need_from == "current":
            reference = self.walker.state
        needs = self._need_matrix()[reference, self.memory.states]
        pending = []
        for _ in range(cfg.minibatch):
            floored = np.maximum(self.priorities, cfg.min_priority)
            probs = need_weighted_probabilities(floored, needs, cfg.alpha)
            j = int(np.searchsorted(np.cumsum(probs), self.rng.random(), side="right"))
            j = min(j, len(probs) - 1)
            weight = 1.0
            if cfg.beta > 0.0:
                weight = importance_weight(probs[j], probs[probs > 0].min(), cfg.beta)
            s, a, r, nxt, term = self.memory.item(j)
            delta = self.q.td_error(s, a, r, nxt, term)
            self.priorities[j] = abs(delta)
            pending.append((self.q.index(s, a), weight * delta))
        # the whole minibatch is evaluated against the same parameters
        for i, step in pending:
            self._shift(i, self.config.step_size * step)

    def _sampler_weight(self, j: int) -> float:
        leaves = self.sampler.leaves()
        return importance_weight(self.sampler.leaf(j), leaves[leaves > 0].min(), self.config.beta)

    def _replay_oracle(self) -> None:
        best_j, best = None, -1.0
        for j in self._oracle_items:
            s, a, r, nxt, term = self.memory.item(j)
            size = abs(self.q.td_error(s, a, r, nxt, term))
            if size > best:
                best_j, best = j, size
        self._apply(best_j)

    def run(self) -> CliffwalkResult:
        cfg = self.config
        while self.mse >= cfg.threshold and self.q_updates < cfg.budget:
            self.replay_once()
        converged = self.mse < cfg.threshold
        return CliffwalkResult(self.scheme, self.n, self.seed, self.q_updates, converged, self.mse)


def cliffwalk_run(scheme: str, n: int, seed: int, config: CliffwalkConfig | None = None) -> CliffwalkResult:
    """Replay until the MSE to the true Q drops below the threshold; see module docs."""
    return CliffwalkLearner(scheme, n, seed, config).run()
