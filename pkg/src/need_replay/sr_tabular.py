"""Tabular successor representation learned with TD(lambda).

With one-hot state features the SR is a |S| x |S| matrix ``M`` whose entry
``M[i, j]`` is the expected discounted number of future visits to state j
starting from state i.  That entry is the "need" of an experience recorded in
state j when the agent currently sits in state i.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ContractViolation, NumericalError


class EligibilityTrace:
    """Accumulating trace over states: ``e <- gamma * lam * e + onehot(s)``."""

    def __init__(self, state_count: int):
        self.e = np.zeros(state_count)

    def reset(self) -> None:
        self.e[:] = 0.0

    def step(self, state: int, decay: float) -> np.ndarray:
        self.e *= decay
        self.e[state] += 1.0
        return self.e


class SRMatrix:
    """Successor matrix plus its eligibility trace.

    Args:
        M: Initial |S| x |S| matrix (copied).
        gamma: Discount in (0, 1).
        lam: Trace decay in [0, 1].
        lr: TD step size.
    """

    def __init__(self, M, gamma: float, lam: float = 0.5, lr: float = 0.1):
        M = np.array(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ContractViolation(f"SR matrix must be square, got shape {M.shape}")
        if not 0 <= gamma < 1:
            raise ContractViolation(f"gamma must lie in [0, 1), got {gamma}")
        if not 0 <= lam <= 1:
            raise ContractViolation(f"lambda must lie in [0, 1], got {lam}")
        self.M = M
        self.gamma = float(gamma)
        self.lam = float(lam)
        self.lr = float(lr)
        self.trace = EligibilityTrace(M.shape[0])

    @property
    def state_count(self) -> int:
        return self.M.shape[0]

    def copy(self) -> "SRMatrix":
        other = SRMatrix(self.M, self.gamma, self.lam, self.lr)
        other.trace.e[:] = self.trace.e
        return other

    def start_episode(self) -> None:
        self.trace.reset()

    def update(self, state: int, next_state: int, terminal: bool) -> None:
        """One TD(lambda) step for the observed move ``state -> next_state``.

        The trace is bumped first and the bumped trace carries the row error.
        On terminal moves the bootstrap row is dropped.
        """
        M = self.M
        e = self.trace.step(state, self.gamma * self.lam)
        error = -M[state].copy()
        error[state] += 1.0
        if not terminal:
            error += self.gamma * M[next_state]
        M += self.lr * np.outer(e, error)

    def need(self, current: int, target: int) -> float:
        """Need of ``target`` seen from ``current``; negative entries read as 0."""
        value = self.M[current, target]
        return value if value > 0.0 else 0.0

    def need_row(self, current: int) -> np.ndarray:
        return np.maximum(self.M[current], 0.0)

    def export_row(self, state: int, shape, path) -> np.ndarray:
        """Write the clamped need row of ``state`` reshaped to ``shape`` as CSV."""
        grid = self.need_row(state).reshape(shape)
        write_grid_csv(grid, path)
        return grid


def write_grid_csv(grid: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, grid, delimiter=",", fmt="%.12g")


def policy_transition_matrix(env, policy: np.ndarray) -> np.ndarray:
    """State-to-state matrix T_pi for a deterministic tabular env.

    ``policy`` has shape (|S|, |A|) with action probabilities per state.
    Transitions flagged terminal contribute nothing, and states for which
    ``env.is_terminal`` holds get an all-zero row, so their future occupancy
    beyond the current step is zero.
    """
    n = env.state_count
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (n, env.action_count):
        raise ContractViolation(f"policy must have shape {(n, env.action_count)}")
    is_terminal = getattr(env, "is_terminal", lambda s: False)
    walls = {env.state_id(w) for w in getattr(env, "walls", ())}
    T = np.zeros((n, n))
    for s in range(n):
        if is_terminal(s) or s in walls:
            continue
        for a in range(env.action_count):
            if policy[s, a] == 0.0:
                continue
            nxt, _, terminal = env.transition(s, a)
            if not terminal:
                T[s, nxt] += policy[s, a]
    return T


def uniform_policy(env) -> np.ndarray:
    return np.full((env.state_count, env.action_count), 1.0 / env.action_count)


def deterministic_policy(actions, action_count: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    policy = np.zeros((actions.size, action_count))
    policy[np.arange(actions.size), actions] = 1.0
    return policy


def sr_closed_form(T: np.ndarray, gamma: float) -> np.ndarray:
    """``(I - gamma T)^-1`` by a direct linear solve."""
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    try:
        M = np.linalg.solve(np.eye(n) - gamma * T, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SR linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(M)):
        raise NumericalError("SR linear solve produced non-finite entries")
    return M


def sr_init_uniform(env, gamma: float, lam: float = 0.5, lr: float = 0.1) -> SRMatrix:
    """SR of the uniform-random policy on ``env``, ready for TD(lambda) learning."""
    if not 0 < gamma < 1:
        raise ContractViolation(f"gamma must lie in (0, 1), got {gamma}")
    T = policy_transition_matrix(env, uniform_policy(env))
    return SRMatrix(sr_closed_form(T, gamma), gamma, lam, lr)


def empirical_transition_matrix(pairs, state_count: int) -> np.ndarray:
    """Row-normalized counts of observed ``(state, next_state, terminal)`` moves.

    Terminal moves count toward the row total but add no successor mass.
    Rows of unvisited states are zero.
    """
    counts = np.zeros((state_count, state_count))
    totals = np.zeros(state_count)
    for s, nxt, terminal in pairs:
        totals[s] += 1
        if not terminal:
            counts[s, nxt] += 1
    visited = totals > 0
    counts[visited] /= totals[visited, None]
    return counts


def learn_sr_fixed_policy(env, policy, episodes: int, lam: float = 0.5, lr: float = 0.1,
                          rng: np.random.Generator | None = None, gamma: float | None = None,
                          start_states=None, checkpoints=(), lr_decay: float | None = None,
                          max_steps: int | None = None, sr: SRMatrix | None = None):
    """Learn the SR of a fixed stochastic ``policy`` (|S| x |A|) by TD(lambda).

    Episodes start at ``env.reset()`` or, when ``start_states`` is given, at
    a state drawn uniformly from it.  With ``lr_decay`` the step size in
    episode ``k`` is ``lr / (1 + k / lr_decay)``.  Returns the learned
    :class:`SRMatrix`, a dict of copies of ``M`` taken after each episode count
    in ``checkpoints`` (key 0 is the initial matrix), and the list of
    observed ``(state, next_state, terminal)`` moves.
    """
    rng = rng if rng is not None else np.random.default_rng()
    gamma = env.gamma if gamma is None else gamma
    if sr is None:
        sr = sr_init_uniform(env, gamma, lam, lr)
    cumulative = np.cumsum(np.asarray(policy, dtype=float), axis=1)
    last = env.action_count - 1
    wanted = set(checkpoints)
    snapshots = {0: sr.M.copy()} if 0 in wanted else {}
    moves = []
    for episode in range(episodes):
        if lr_decay:
            sr.lr = lr / (1.0 + episode / lr_decay)
        if start_states is None:
            s = env.reset()
        else:
            s = int(start_states[rng.integers(len(start_states))])
        sr.start_episode()
        steps = 0
        while True:
            a = min(int(np.searchsorted(cumulative[s], rng.random(), side="right")), last)
            nxt, _, terminal = env.transition(s, a)
            sr.update(s, nxt, terminal)
            moves.append((s, nxt, terminal))
            steps += 1
            if terminal or (max_steps is not None and steps >= max_steps):
                break
            s = nxt
        if episode + 1 in wanted:
            snapshots[episode + 1] = sr.M.copy()
    return sr, snapshots, moves
