"""Prioritized sweeping, with and without need-weighted queue pops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..replay_core import MaxPriorityQueue, QueueEntry
from ..sr_tabular import SRMatrix, sr_init_uniform
from .tabular import DeterministicModel, QTable, epsilon_greedy

NEED_REFERENCES = ("next", "current", "popped")


@dataclass
class StepRecord:
    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool
    priority: float
    planning_updates: int


class PrioritizedSweepingAgent:
    """Dyna-style planner popping (state, action) pairs from a priority queue.

    With ``use_need`` the pop picks the entry maximizing
    ``priority * need(reference, entry.state)`` where the need is read from a
    tabular SR learned online with TD(lambda); otherwise the largest priority
    wins.

    ``need_reference`` selects the state the need is measured from:
    ``"next"`` is where the agent stands after the real step,
    ``"current"`` is the state the real step was taken from, and
    ``"popped"`` (the default) starts from the state the real step was taken
    from and then re-anchors on each popped state, as the planning loop
    reuses that variable.
    """

    def __init__(self, env, use_need: bool = False, n_planning: int = 5, alpha: float = 0.5,
                 gamma: float = 0.95, epsilon: float = 0.1, theta: float = 1e-4,
                 lam: float = 0.5, sr_lr: float = 0.1, need_reference: str = "popped",
                 random_ties: bool = True, rng: np.random.Generator | None = None, sr: SRMatrix | None = None):
        if need_reference not in NEED_REFERENCES:
            raise ValueError(f"need_reference must be one of {NEED_REFERENCES}")
        self.env = env
        self.use_need = use_need
        self.n_planning = n_planning
        self.theta = theta
        self.need_reference = need_reference
        self.random_ties = random_ties
        self.rng = rng if rng is not None else np.random.default_rng()
        self.q = QTable(env.state_count, env.action_count, alpha, gamma, epsilon)
        self.model = DeterministicModel()
        self.queue = MaxPriorityQueue()
        if use_need and sr is None:
            sr = sr_init_uniform(env, gamma, lam, sr_lr)
        self.sr = sr
        self.state = env.reset()
        self.q_updates = 0

    def start_episode(self) -> int:
        self.state = self.env.reset()
        if self.sr is not None:
            self.sr.start_episode()
        return self.state

    def _scorer(self, reference: int):
        if not self.use_need:
            return None
        need = self.sr.need_row(reference)
        return lambda entry: entry.priority * need[entry.state]

    def _pop(self, reference: int) -> QueueEntry:
        scorer = self._scorer(reference)
        return self.queue.pop_best() if scorer is None else self.queue.pop_best(scorer)

    def _priority(self, state, action, reward, next_state, terminal) -> float:
        return abs(self.q.td_error(state, action, reward, next_state, terminal))

    def step(self) -> StepRecord:
        """Take one real step and up to ``n_planning`` queue pops."""
        s = self.state
        a = epsilon_greedy(self.q, s, self.rng, self.random_ties)
        s_next, r, terminal = self.env.step(a)
        if self.sr is not None:
            self.sr.update(s, s_next, terminal)
        self.model.store(s, a, r, s_next, terminal)
        priority = self._priority(s, a, r, s_next, terminal)
        if priority > self.theta:
            self.queue.insert(s, a, priority)

        reference = s_next if self.need_reference == "next" else s
        updates = 0
        while self.queue and updates < self.n_planning:
            ps, pa, _ = self._pop(reference)
            pr, pnext, pterm = self.model.predict(ps, pa)
            self.q.update(ps, pa, pr, pnext, pterm)
            updates += 1
            for bs, ba, br in self.model.predecessors(ps):
                p = self._priority(bs, ba, br, ps, self.model.predict(bs, ba)[2])
                if p > self.theta:
                    self.queue.insert(bs, ba, p)
            if self.need_reference == "popped":
                reference = ps
        self.q_updates += updates
        self.state = s_next
        return StepRecord(s, a, r, s_next, terminal, priority, updates)

    def run_episode(self, max_steps: int | None = None) -> int:
        """Play one episode from the start state; returns the number of real steps."""
        self.start_episode()
        steps = 0
        while True:
            record = self.step()
            steps += 1
            if record.terminal or (max_steps is not None and steps >= max_steps):
                return steps
