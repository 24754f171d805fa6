"""Action-value containers, a deterministic world model, and epsilon-greedy."""

from __future__ import annotations

import numpy as np


class QTable:
    def __init__(self, state_count: int, action_count: int, alpha: float = 0.5,
                 gamma: float = 0.95, epsilon: float = 0.1):
        self.Q = np.zeros((state_count, action_count))
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon = epsilon

    @property
    def action_count(self) -> int:
        return self.Q.shape[1]

    def values(self, state: int) -> np.ndarray:
        return self.Q[state]

    def td_error(self, state, action, reward, next_state, terminal) -> float:
        bootstrap = 0.0 if terminal else self.gamma * self.Q[next_state].max()
        return reward + bootstrap - self.Q[state, action]

    def update(self, state, action, reward, next_state, terminal) -> float:
        delta = self.td_error(state, action, reward, next_state, terminal)
        self.Q[state, action] += self.alpha * delta
        return delta


class LinearQ:
    """``Q(s, a) = theta . phi(s, a)`` with one-hot state-action features.

    The gradient of ``Q(s, a)`` with respect to ``theta`` is ``phi(s, a)``,
    so every entry of ``theta`` is directly one action value.
    """

    def __init__(self, state_count: int, action_count: int, gamma: float = 0.9,
                 epsilon: float = 0.0):
        self.state_count = state_count
        self.action_count = action_count
        self.theta = np.zeros(state_count * action_count)
        self.gamma = gamma
        self.epsilon = epsilon

    def index(self, state: int, action: int) -> int:
        return state * self.action_count + action

    def features(self, state: int, action: int) -> np.ndarray:
        phi = np.zeros_like(self.theta)
        phi[self.index(state, action)] = 1.0
        return phi

    def q(self, state: int, action: int) -> float:
        return self.theta[self.index(state, action)]

    def values(self, state: int) -> np.ndarray:
        i = state * self.action_count
        return self.theta[i:i + self.action_count]

    def table(self) -> np.ndarray:
        return self.theta.reshape(self.state_count, self.action_count)

    def greedy(self, state: int) -> int:
        return int(np.argmax(self.values(state)))

    def td_error(self, state, action, reward, next_state, terminal) -> float:
        # online parameters double as the target network
        bootstrap = 0.0 if terminal else self.gamma * self.q(next_state, self.greedy(next_state))
        return reward + bootstrap - self.q(state, action)


def epsilon_greedy(q, state: int, rng: np.random.Generator, random_ties: bool = False) -> int:
    """Uniform action with probability ``q.epsilon``, else greedy.

    Greedy ties go to the lowest action id unless ``random_ties`` is set, in
    which case one of the tied actions is drawn uniformly.
    """
    if q.epsilon > 0.0 and rng.random() < q.epsilon:
        return int(rng.integers(q.action_count))
    values = q.values(state)
    if random_ties:
        best = np.flatnonzero(values == values.max())
        if best.size > 1:
            return int(best[rng.integers(best.size)])
        return int(best[0])
    return int(np.argmax(values))


class DeterministicModel:
    """Last observed outcome of every (state, action) plus a predecessor index."""

    def __init__(self):
        self._forward: dict[tuple[int, int], tuple[float, int, bool]] = {}
        self._reverse: dict[int, dict[tuple[int, int], None]] = {}

    def __len__(self) -> int:
        return len(self._forward)

    def __contains__(self, key) -> bool:
        return tuple(key) in self._forward

    def store(self, state: int, action: int, reward: float, next_state: int, terminal: bool) -> None:
        key = (int(state), int(action))
        old = self._forward.get(key)
        if old is not None and old[1] != next_state:
            self._reverse[old[1]].pop(key, None)
        self._forward[key] = (float(reward), int(next_state), bool(terminal))
        self._reverse.setdefault(int(next_state), {})[key] = None

    def predict(self, state: int, action: int) -> tuple[float, int, bool]:
        return self._forward[(state, action)]

    def predecessors(self, state: int):
        """(state, action, reward) triples predicted to lead to ``state``."""
        for key in self._reverse.get(state, ()):
            reward, _, _ = self._forward[key]
            yield key[0], key[1], reward
