"""Replay-buffer structures: a deduplicating max-priority queue for prioritized
sweeping and a sum-tree proportional sampler for prioritized experience replay.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterator, NamedTuple

import numpy as np

from .errors import ContractViolation, EmptyQueueError, NoMassError


@dataclass
class Transition:
    """One stored experience.

    ``state``/``next_state`` are integer ids for tabular tasks or feature
    vectors for function approximation.
    """

    state: Any
    action: int
    reward: float
    next_state: Any
    terminal: bool
    priority: float = 1.0

    def __post_init__(self):
        if self.priority < 0:
            raise ContractViolation(f"priority must be >= 0, got {self.priority}")


class QueueEntry(NamedTuple):
    state: int
    action: int
    priority: float


def by_priority(entry: QueueEntry) -> float:
    return entry.priority


class MaxPriorityQueue:
    """Priority queue keyed by (state, action).

    Re-inserting an existing key keeps the larger of the two priorities.
    Popping takes a scorer so that plain prioritized sweeping (score is the
    priority) and need-weighted sweeping (score is priority times need) share
    one structure.  ``pop_best`` is a linear scan; queues in tabular mazes
    hold at most |S|*|A| entries.
    """

    def __init__(self):
        self._entries: dict[tuple[int, int], float] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __bool__(self) -> bool:
        return bool(self._entries)

    def __contains__(self, key) -> bool:
        return tuple(key) in self._entries

    def __iter__(self) -> Iterator[QueueEntry]:
        for (s, a), p in self._entries.items():
            yield QueueEntry(s, a, p)

    def priority(self, state: int, action: int) -> float:
        return self._entries[(state, action)]

    def insert(self, state: int, action: int, priority: float) -> None:
        if not priority >= 0:
            raise ContractViolation(f"priority must be >= 0, got {priority}")
        key = (int(state), int(action))
        old = self._entries.get(key)
        if old is None or priority > old:
            self._entries[key] = float(priority)

    def pop_best(self, scorer: Callable[[QueueEntry], float] = by_priority) -> QueueEntry:
        """Remove and return the entry maximizing ``scorer``.

        Ties go to the smallest state id, then the smallest action id.
        """
        if not self._entries:
            raise EmptyQueueError("pop from an empty priority queue")
        best = None
        best_rank = None
        for (s, a), p in self._entries.items():
            rank = (scorer(QueueEntry(s, a, p)), -s, -a)
            if best_rank is None or rank > best_rank:
                best_rank = rank
                best = (s, a, p)
        s, a, p = best
        del self._entries[(s, a)]
        return QueueEntry(s, a, p)

    def clear(self) -> None:
        self._entries.clear()


class ProportionalSampler:
    """Sum-tree over ``capacity`` leaves with proportional sampling.

    Raw priorities are stored as given; each leaf holds
    ``max(priority, min_priority) ** alpha``.  Internal nodes are recomputed
    as the sum of their two children on every write, so the tree never drifts.
    Leaves are filled in insertion order and overwritten ring-buffer style once
    ``capacity`` is reached.

    Args:
        capacity: Maximum number of leaves.
        alpha: Prioritization exponent in [0, 1]; 0 gives uniform sampling.
        min_priority: Floor applied to raw priorities before exponentiation.
            Agents use 1e-8 so that stored transitions stay reachable.
        initial_max_priority: Priority given to the first inserted item.
    """

    def __init__(self, capacity: int, alpha: float = 0.6, min_priority: float = 0.0,
                 initial_max_priority: float = 1.0):
        if capacity < 1:
            raise ContractViolation("capacity must be positive")
        if not 0.0 <= alpha <= 1.0:
            raise ContractViolation(f"alpha must lie in [0, 1], got {alpha}")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.min_priority = float(min_priority)
        self.max_priority = float(initial_max_priority)
        width = 1
        while width < self.capacity:
            width *= 2
        self._width = width
        self._tree = [0.0] * (2 * width)
        self._raw = [0.0] * self.capacity
        self._size = 0
        self._cursor = 0

    def __len__(self) -> int:
        return self._size

    @property
    def total(self) -> float:
        return self._tree[1]

    def _leaf_value(self, priority: float) -> float:
        return max(priority, self.min_priority) ** self.alpha

    def _write(self, index: int, value: float) -> None:
        tree = self._tree
        node = index + self._width
        tree[node] = value
        node //= 2
        while node:
            tree[node] = tree[2 * node] + tree[2 * node + 1]
            node //= 2

    def add(self, priority: float | None = None) -> int:
        """Insert a new item and return its leaf index.

        Without an explicit priority the item enters with the largest
        priority seen so far.
        """
        if priority is None:
            priority = self.max_priority
        index = self._cursor
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.update(index, priority)
        return index

    def update(self, index: int, priority: float) -> None:
        if not 0 <= index < self._size:
            raise IndexError(f"leaf index {index} out of range [0, {self._size})")
        if not priority >= 0:
            raise ContractViolation(f"priority must be >= 0, got {priority}")
        self._raw[index] = float(priority)
        if priority > self.max_priority:
            self.max_priority = float(priority)
        self._write(index, self._leaf_value(priority))

    def priority(self, index: int) -> float:
        return self._raw[index]

    def leaf(self, index: int) -> float:
        return self._tree[index + self._width]

    def leaves(self) -> np.ndarray:
        return np.array(self._tree[self._width:self._width + self._size])

    def probability(self, index: int) -> float:
        if self.total <= 0:
            raise NoMassError("sampler holds no probability mass")
        return self.leaf(index) / self.total

    def find(self, mass: float) -> int:
        """Return the leaf whose cumulative-mass interval contains ``mass``."""
        tree = self._tree
        node = 1
        while node < self._width:
            left = 2 * node
            if mass < tree[left] or tree[left + 1] <= 0.0:
                node = left
            else:
                mass -= tree[left]
                node = left + 1
        # only positive-mass subtrees are entered, so the leaf has mass
        return node - self._width

    def sample(self, rng: np.random.Generator) -> int:
        total = self._tree[1]
        if total <= 0.0:
            raise NoMassError("sampler holds no probability mass")
        return self.find(rng.random() * total)

    def check_consistency(self, tol: float = 1e-9) -> bool:
        tree = self._tree
        for node in range(1, self._width):
            if abs(tree[node] - tree[2 * node] - tree[2 * node + 1]) > tol:
                return False
        return True


def importance_weight(p_j: float, p_min: float, beta: float) -> float:
    """``(N P(j))**-beta / max_i (N P(i))**-beta``; the largest weight belongs to the rarest item."""
    return (p_j / p_min) ** -beta
