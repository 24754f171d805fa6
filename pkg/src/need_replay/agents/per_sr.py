"""Prioritized replay whose Q-updates are scaled by an approximate-SR need.

Sampling stays purely TD-error proportional.  Each sampled update
``w_j * delta_j * grad Q`` is multiplied by the need of the transition's
start state, read by projecting the SR vector of the latest real step onto
that state's feature and shifting the minibatch so no need is negative.
The SR approximator is trained on the same minibatch.

With ``use_need=False`` every need is 1 and the agent is plain PER.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..envs import Chain, value_iteration_q
from ..errors import InsufficientDataError
from ..replay_core import ProportionalSampler, Transition, importance_weight
from ..sr_approx import LinearApproxSR, need_offset, need_projection
from .tabular import LinearQ, epsilon_greedy


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


@dataclass
class ReplayStepRecord:
    """What one minibatch replay did; ``q_change`` is the applied change to theta."""

    indices: list[int]
    deltas: np.ndarray
    weights: np.ndarray
    needs: np.ndarray
    q_change: np.ndarray


class RingMemory:
    """Fixed-capacity transition store whose slots mirror the sampler's leaves."""

    def __init__(self, capacity: int, alpha: float, min_priority: float):
        self.items: list[Transition | None] = [None] * capacity
        self.sampler = ProportionalSampler(capacity, alpha, min_priority)

    def __len__(self) -> int:
        return len(self.sampler)

    def add(self, t: Transition) -> int:
        index = self.sampler.add()
        self.items[index] = t
        return index

    def __getitem__(self, index: int) -> Transition:
        return self.items[index]


def per_sr_replay_step(q: LinearQ, memory: RingMemory, sr: LinearApproxSR | None,
                       m_ref: np.ndarray | None, k: int, rng: np.random.Generator,
                       step_size: float, beta: float = 0.0, sr_lr: float | None = None,
                       use_need: bool = True, indices=None) -> ReplayStepRecord:
    """Sample ``k`` transitions, then apply one accumulated Q step and one SR step.

    TD errors are all computed against the parameters held before the step;
    each sampled priority is refreshed to ``|delta_j|`` immediately, so later
    draws in the same minibatch (and their importance weights) see it.
    Passing ``indices`` replays exactly those slots instead of sampling.
    """
    if k > len(memory):
        raise InsufficientDataError(f"minibatch of {k} requested from {len(memory)} stored transitions")
    sampler = memory.sampler
    size = q.state_count
    chosen = list(indices) if indices is not None else None
    indices, deltas, weights = [], [], []
    for i in range(k):
        j = chosen[i] if chosen is not None else sampler.sample(rng)
        t = memory[j]
        w = 1.0
        if beta > 0.0:
            leaves = sampler.leaves()
            w = importance_weight(sampler.leaf(j), leaves[leaves > 0].min(), beta)
        delta = q.td_error(t.state, t.action, t.reward, t.next_state, t.terminal)
        sampler.update(j, abs(delta))
        indices.append(j)
        deltas.append(delta)
        weights.append(w)
    deltas = np.array(deltas)
    weights = np.array(weights)

    if use_need:
        phis = [sr.encode(one_hot(memory[j].state, size)) for j in indices]
        needs = need_offset([need_projection(m_ref, phi) for phi in phis])
    else:
        needs = np.ones(k)

    change = np.zeros_like(q.theta)
    for j, w, delta, n in zip(indices, weights, deltas, needs):
        t = memory[j]
        change[q.index(t.state, t.action)] += w * delta * n
    change *= step_size

    if use_need:
        grad = np.zeros(sr.param_count)
        for j in indices:
            t = memory[j]
            nxt = one_hot(t.next_state, size)
            report = sr.losses(one_hot(t.state, size), t.action, nxt, t.terminal,
                               q.greedy(t.next_state))
            grad += report.gradients
        sr.apply_gradients(grad, sr_lr)
    q.theta += change
    return ReplayStepRecord(indices, deltas, weights, needs, change)


@dataclass
class ToyConfig:
    n_states: int = 5
    continuing: bool = True
    gamma: float = 0.9
    step_size: float = 0.25
    sr_lr: float = 0.05
    alpha: float = 0.6
    beta: float = 0.0
    minibatch: int = 4
    replay_period: int = 1
    epsilon: float = 0.5
    capacity: int = 10_000
    min_priority: float = 1e-8
    threshold: float = 1e-3
    budget: int = 1_000_000


@dataclass
class ToyResult:
    algorithm: str
    seed: int
    q_updates: int
    converged: bool
    final_mse: float
    env_steps: int = 0
    history: list = field(default_factory=list, repr=False)


class PERSRAgent:
    """Online learner on the toy chain replaying every ``replay_period`` steps."""

    def __init__(self, use_need: bool, seed: int, config: ToyConfig | None = None):
        self.config = cfg = config or ToyConfig()
        self.use_need = use_need
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.env = Chain(cfg.n_states, cfg.gamma, cfg.continuing)
        self.q = LinearQ(cfg.n_states, 2, cfg.gamma, epsilon=cfg.epsilon)
        self.memory = RingMemory(cfg.capacity, cfg.alpha, cfg.min_priority)
        self.sr = (LinearApproxSR.one_hot(cfg.n_states, 2, cfg.gamma, cfg.sr_lr)
                   if use_need else None)
        self.q_star = value_iteration_q(self.env, cfg.gamma).ravel()
        self.q_updates = 0
        self.env_steps = 0
        self.state = self.env.reset()

    @property
    def mse(self) -> float:
        return float(np.mean((self.q.theta - self.q_star) ** 2))

    def step(self) -> ReplayStepRecord | None:
        """One real step, followed by a replay when the period comes round."""
        cfg = self.config
        s = self.state
        a = epsilon_greedy(self.q, s, self.rng, random_ties=True)
        nxt, r, terminal = self.env.step(a)
        self.memory.add(Transition(s, a, r, nxt, terminal))
        self.env_steps += 1
        self.state = self.env.reset() if terminal else nxt

        record = None
        if self.env_steps % cfg.replay_period == 0 and len(self.memory) >= cfg.minibatch:
            m_ref = self.sr.sr_vector(one_hot(s, cfg.n_states), a) if self.use_need else None
            record = per_sr_replay_step(self.q, self.memory, self.sr, m_ref, cfg.minibatch,
                                        self.rng, cfg.step_size, cfg.beta, cfg.sr_lr,
                                        self.use_need)
            self.q_updates += cfg.minibatch
        return record

    def run(self) -> ToyResult:
        cfg = self.config
        while self.mse >= cfg.threshold and self.q_updates < cfg.budget:
            self.step()
        name = "per-sr" if self.use_need else "per"
        return ToyResult(name, self.seed, self.q_updates, self.mse < cfg.threshold, self.mse,
                         self.env_steps)


def toy_run(algorithm: str, seed: int, config: ToyConfig | None = None) -> ToyResult:
    if algorithm not in ("per", "per-sr"):
        raise ValueError(f"unknown algorithm {algorithm!r}; expected 'per' or 'per-sr'")
    return PERSRAgent(algorithm == "per-sr", seed, config).run()
