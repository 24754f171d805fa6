"""Episodic tabular environments: the Dyna maze and the Blind Cliffwalk chain,
plus ground-truth helpers used by tests and baselines.
"""

from __future__ import annotations

from collections import deque
from pathlib import Path

import numpy as np

from .errors import ContractViolation, UnreachableError

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
_MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}

DEFAULT_WALLS = frozenset({(1, 2), (2, 2), (3, 2), (4, 5), (0, 7), (1, 7), (2, 7)})


class DynaMaze:
    """Grid maze with four moves, walls, and a noisy goal reward.

    State ids are ``cols * row + col``.  Moves off the board or into a wall
    leave the agent in place.  Entering the goal ends the episode and pays a
    reward drawn from Normal(reward_mean, reward_std) using ``rng``.
    """

    action_count = 4

    def __init__(self, rows=6, cols=9, walls=DEFAULT_WALLS, start=(2, 0), goal=(0, 8),
                 gamma=0.95, reward_mean=1.0, reward_std=0.1, rng=None):
        self.rows = rows
        self.cols = cols
        self.walls = frozenset(tuple(w) for w in walls)
        self.start = tuple(start)
        self.goal = tuple(goal)
        self.gamma = gamma
        self.reward_mean = reward_mean
        self.reward_std = reward_std
        self.rng = rng if rng is not None else np.random.default_rng()
        for cell in (self.start, self.goal):
            if not self._inside(cell) or cell in self.walls:
                raise ContractViolation(f"start/goal cell {cell} is off-grid or a wall")
        self.current_state = self.start_state

    @classmethod
    def from_text(cls, text: str, **kwargs) -> "DynaMaze":
        """Build a maze from a grid of ``.`` open, ``#`` wall, ``S`` start, ``G`` goal."""
        lines = [line.strip() for line in text.strip().splitlines() if line.strip()]
        if not lines or len({len(line) for line in lines}) != 1:
            raise ContractViolation("maze grid must be a non-empty rectangle")
        walls, start, goal = set(), None, None
        for r, line in enumerate(lines):
            for c, ch in enumerate(line):
                if ch == "#":
                    walls.add((r, c))
                elif ch == "S":
                    start = (r, c)
                elif ch == "G":
                    goal = (r, c)
                elif ch != ".":
                    raise ContractViolation(f"unknown maze character {ch!r} at ({r}, {c})")
        if start is None or goal is None:
            raise ContractViolation("maze grid needs exactly one S and one G")
        return cls(rows=len(lines), cols=len(lines[0]), walls=walls, start=start,
                   goal=goal, **kwargs)

    @classmethod
    def from_file(cls, path, **kwargs) -> "DynaMaze":
        return cls.from_text(Path(path).read_text(), **kwargs)

    def to_text(self) -> str:
        rows = []
        for r in range(self.rows):
            row = []
            for c in range(self.cols):
                cell = (r, c)
                row.append("#" if cell in self.walls else "S" if cell == self.start
                           else "G" if cell == self.goal else ".")
            rows.append("".join(row))
        return "\n".join(rows) + "\n"

    @property
    def state_count(self) -> int:
        return self.rows * self.cols

    @property
    def start_state(self) -> int:
        return self.state_id(self.start)

    @property
    def goal_state(self) -> int:
        return self.state_id(self.goal)

    def state_id(self, cell) -> int:
        return self.cols * cell[0] + cell[1]

    def cell(self, state: int) -> tuple[int, int]:
        return divmod(int(state), self.cols)

    def _inside(self, cell) -> bool:
        return 0 <= cell[0] < self.rows and 0 <= cell[1] < self.cols

    def is_terminal(self, state: int) -> bool:
        return state == self.goal_state

    def open_states(self) -> list[int]:
        return [self.state_id((r, c)) for r in range(self.rows) for c in range(self.cols)
                if (r, c) not in self.walls]

    def move(self, state: int, action: int) -> int:
        """Deterministic successor of ``state`` under ``action`` (no reward, no rng)."""
        if not 0 <= action < self.action_count:
            raise IndexError(f"action {action} out of range [0, {self.action_count})")
        r, c = self.cell(state)
        dr, dc = _MOVES[action]
        target = (r + dr, c + dc)
        if not self._inside(target) or target in self.walls:
            return int(state)
        return self.state_id(target)

    def transition(self, state: int, action: int):
        """(next_state, expected reward, terminal) without sampling reward noise."""
        nxt = self.move(state, action)
        terminal = nxt == self.goal_state
        return nxt, (self.reward_mean if terminal else 0.0), terminal

    def reset(self) -> int:
        self.current_state = self.start_state
        return self.current_state

    def step(self, action: int):
        nxt = self.move(self.current_state, action)
        terminal = nxt == self.goal_state
        reward = float(self.rng.normal(self.reward_mean, self.reward_std)) if terminal else 0.0
        self.current_state = nxt
        return nxt, reward, terminal


class BlindCliffwalk:
    """n-state chain where only an unbroken run of ``RIGHT`` actions pays 1.

    With ``fall_terminates`` (the default) a wrong action ends the episode
    with reward 0 and the next episode restarts at s_0.  Otherwise a wrong
    action is a non-terminal jump back to s_0.
    """

    RIGHT = 0
    WRONG = 1
    action_count = 2

    def __init__(self, n: int, gamma: float = 0.9, fall_terminates: bool = True):
        if n < 2:
            raise ContractViolation("cliffwalk needs at least 2 states")
        self.n = n
        self.gamma = gamma
        self.fall_terminates = fall_terminates
        self.current_state = 0

    @property
    def state_count(self) -> int:
        return self.n

    def reset(self) -> int:
        self.current_state = 0
        return 0

    def transition(self, state: int, action: int):
        """(next_state, reward, terminal) for ``action`` taken in ``state``."""
        if not 0 <= action < self.action_count:
            raise IndexError(f"action {action} out of range [0, 2)")
        if action == self.RIGHT:
            if state == self.n - 1:
                return state, 1.0, True
            return state + 1, 0.0, False
        return 0, 0.0, self.fall_terminates

    def step(self, action: int):
        nxt, reward, terminal = self.transition(self.current_state, action)
        self.current_state = nxt
        return nxt, reward, terminal

    def _record(self, state: int, action: int):
        nxt, reward, terminal = self.transition(state, action)
        return state, action, reward, nxt, terminal

    def transitions_from_all_sequences(self):
        """Transitions produced by executing every one of the 2**n action sequences.

        Each sequence is run from s_0 until the episode ends; duplicates are
        kept, so early states dominate the list as they do in a replay memory
        filled this way.  Yields ``(state, action, reward, next_state, terminal)``.
        """
        n = self.n
        if self.fall_terminates:
            # sequences sharing a prefix up to the first fall produce identical
            # episodes, so count them instead of expanding all 2**n
            for k in range(n + 1):
                copies = 2 ** (n - k - 1) if k < n else 1
                episode = [self._record(s, self.RIGHT) for s in range(k)]
                if k < n:
                    episode.append(self._record(k, self.WRONG))
                for _ in range(copies):
                    yield from episode
            return
        for code in range(2 ** n):
            s = 0
            for step in range(n):
                a = (code >> step) & 1
                record = self._record(s, a)
                yield record
                nxt, term = record[3], record[4]
                if term:
                    break
                s = nxt


class Chain:
    """Short corridor paying 1 for ``RIGHT`` from the last state.

    That move ends the episode, or with ``continuing`` wraps back to state 0
    without ending it.  ``LEFT`` at state 0 bumps into the wall and stays
    put.  Everything else pays 0.
    """

    LEFT = 0
    RIGHT = 1
    action_count = 2

    def __init__(self, n: int = 5, gamma: float = 0.9, continuing: bool = False):
        if n < 2:
            raise ContractViolation("chain needs at least 2 states")
        self.n = n
        self.gamma = gamma
        self.continuing = continuing
        self.current_state = 0

    @property
    def state_count(self) -> int:
        return self.n

    def reset(self) -> int:
        self.current_state = 0
        return 0

    def transition(self, state: int, action: int):
        if not 0 <= action < self.action_count:
            raise IndexError(f"action {action} out of range [0, 2)")
        if action == self.RIGHT:
            if state == self.n - 1:
                return (0, 1.0, False) if self.continuing else (state, 1.0, True)
            return state + 1, 0.0, False
        return max(state - 1, 0), 0.0, False

    def step(self, action: int):
        nxt, reward, terminal = self.transition(self.current_state, action)
        self.current_state = nxt
        return nxt, reward, terminal


def cliffwalk_ground_truth_q(n: int, gamma: float, fall_terminates: bool = True) -> np.ndarray:
    """Optimal action values, shape (n, 2), column 0 = right, column 1 = wrong."""
    if n < 2 or not 0 < gamma < 1:
        raise ContractViolation("need n >= 2 and 0 < gamma < 1")
    q = np.zeros((n, 2))
    q[:, BlindCliffwalk.RIGHT] = gamma ** (n - 1 - np.arange(n))
    if not fall_terminates:
        q[:, BlindCliffwalk.WRONG] = gamma * q[0, BlindCliffwalk.RIGHT]
    return q


def value_iteration_q(env, gamma=None, tol=1e-14, max_iter=100_000) -> np.ndarray:
    """Q* of a deterministic tabular env exposing ``transition(s, a)``."""
    gamma = env.gamma if gamma is None else gamma
    n, m = env.state_count, env.action_count
    model = [[env.transition(s, a) for a in range(m)] for s in range(n)]
    q = np.zeros((n, m))
    for _ in range(max_iter):
        v = q.max(axis=1)
        new = np.array([[r + (0.0 if term else gamma * v[nxt]) for nxt, r, term in row]
                        for row in model])
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
    return q


def maze_shortest_path_length(maze: DynaMaze) -> int:
    """Breadth-first step count from start to goal."""
    start, goal = maze.start_state, maze.goal_state
    dist = {start: 0}
    frontier = deque([start])
    while frontier:
        s = frontier.popleft()
        if s == goal:
            return dist[s]
        for a in range(maze.action_count):
            nxt = maze.move(s, a)
            if nxt not in dist:
                dist[nxt] = dist[s] + 1
                frontier.append(nxt)
    raise UnreachableError("goal is not reachable from start")


def maze_distance_to_goal(maze: DynaMaze) -> dict[int, int]:
    """BFS distance to the goal for every open state that can reach it."""
    goal = maze.goal_state
    # moves are reversible on a grid, so BFS outward from the goal
    dist = {goal: 0}
    frontier = deque([goal])
    while frontier:
        s = frontier.popleft()
        for a in range(maze.action_count):
            nxt = maze.move(s, a)
            if nxt not in dist:
                dist[nxt] = dist[s] + 1
                frontier.append(nxt)
    return dist


def maze_shortest_path_policy(maze: DynaMaze) -> np.ndarray:
    """Deterministic policy moving one step closer to the goal (lowest action on ties)."""
    dist = maze_distance_to_goal(maze)
    policy = np.zeros(maze.state_count, dtype=int)
    for s in dist:
        if s == maze.goal_state:
            continue
        best = min(range(maze.action_count), key=lambda a: (dist.get(maze.move(s, a), 10**9), a))
        policy[s] = best
    return policy
