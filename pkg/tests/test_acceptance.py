"""End-to-end acceptance checks.

Each test prints one verdict line and the session summary repeats them all.
The maze and cliffwalk runs are the slow ones (about a minute and a few
minutes on one core).
"""

import statistics

import numpy as np
import pytest
from scipy.stats import chisquare

from need_replay.agents.cliffwalk import SCHEMES
from need_replay.agents.per_sr import RingMemory, per_sr_replay_step
from need_replay.agents.tabular import LinearQ
from need_replay.envs import Chain, DynaMaze, maze_shortest_path_length, maze_shortest_path_policy
from need_replay.harness import cli
from need_replay.harness.config import ExperimentConfig
from need_replay.harness.runner import heatmap_policy, run_experiment
from need_replay.replay_core import ProportionalSampler, Transition
from need_replay.sr_approx import LinearApproxSR, need_offset, need_projection
from need_replay.sr_tabular import (deterministic_policy, learn_sr_fixed_policy,
                                    policy_transition_matrix, sr_closed_form, sr_init_uniform,
                                    uniform_policy)

pytestmark = pytest.mark.acceptance


def first_episode_at_or_below(curve, level):
    hits = [e for e, v in enumerate(curve, start=1) if v <= level]
    return hits[0] if hits else None


def test_maze_learning_curves(tmp_path, report):
    maze = DynaMaze()
    optimum = maze_shortest_path_length(maze)
    summary = run_experiment(ExperimentConfig(experiment="maze", out=str(tmp_path)))
    steps = {a: np.zeros((50, 50)) for a in ("ps", "ps-sr")}
    for row in summary.raw:
        steps[row["algorithm"]][row["trial"], row["episode"] - 1] = row["steps"]
    mean = {a: s.mean(axis=0) for a, s in steps.items()}
    reach = {a: first_episode_at_or_below(m, 16) for a, m in mean.items()}
    wins = int(np.sum(steps["ps-sr"][:, 9] < steps["ps"][:, 9]))
    earlier = reach["ps-sr"] is not None and (reach["ps"] is None or reach["ps-sr"] < reach["ps"])
    passed = optimum == 14 and earlier and wins >= 45
    report(1, passed,
           f"optimum={optimum} first episode mean<=16: ps={reach['ps']} ps-sr={reach['ps-sr']}; "
           f"episode-10 paired wins {wins}/50 (need >=45); "
           f"episode-10 means ps={mean['ps'][9]:.2f} ps-sr={mean['ps-sr'][9]:.2f}")
    assert passed


def test_cliffwalk_orderings(tmp_path, report):
    ns = list(range(8, 14))
    summary = run_experiment(ExperimentConfig(experiment="cliffwalk", n_states=ns, trials=10,
                                              out=str(tmp_path)))
    med = {(r["scheme"], r["n"]): r["median"] for r in summary.aggregates}
    problems = []
    for n in ns:
        m = {s: med[(s, n)] for s in SCHEMES}
        chain = ("oracle", "optimal_need", "need")
        for lo, hi in zip(chain, chain[1:]):
            if not m[lo] <= m[hi]:
                problems.append(f"n={n}: {lo} {m[lo]:g} > {hi} {m[hi]:g}")
        if not m["need"] < m["per"]:
            problems.append(f"n={n}: need {m['need']:g} >= per {m['per']:g}")
        if not m["per"] < m["uniform"]:
            problems.append(f"n={n}: per {m['per']:g} >= uniform {m['uniform']:g}")
        if n >= 10 and not m["random_need"] < m["per"]:
            problems.append(f"n={n}: random_need {m['random_need']:g} >= per {m['per']:g}")
    ratios = [med[("uniform", n + 1)] / med[("uniform", n)] for n in ns[:-1]]
    if min(ratios) < 1.5:
        problems.append(f"uniform growth ratios {np.round(ratios, 2).tolist()}")
    censored = sum(1 for r in summary.raw if not r["converged"])
    passed = not problems
    report(2, passed, ("all orderings hold" if passed else "; ".join(problems))
           + f"; uniform growth min {min(ratios):.2f}; censored runs {censored}")
    assert passed


def test_sr_matches_closed_form(report):
    errors = {}
    chain = Chain(5, 0.9)
    chain_policy = np.tile([0.1, 0.9], (5, 1))
    sr, _, _ = learn_sr_fixed_policy(chain, chain_policy, 2000, lam=0.5, lr=0.1,
                                     rng=np.random.default_rng(0), lr_decay=100,
                                     start_states=range(5))
    truth = sr_closed_form(policy_transition_matrix(chain, chain_policy), 0.9)
    errors["chain"] = np.abs(sr.M - truth).max()

    # deterministic shortest-path policy: every state it visits has a fully learnable row
    maze = DynaMaze()
    policy = deterministic_policy(maze_shortest_path_policy(maze), maze.action_count)
    sr, _, moves = learn_sr_fixed_policy(maze, policy, 2000, lam=0.5, lr=0.1,
                                         rng=np.random.default_rng(0))
    truth = sr_closed_form(policy_transition_matrix(maze, policy), 0.95)
    visited = sorted({m[0] for m in moves})
    errors["maze"] = np.abs(sr.M[visited] - truth[visited]).max()

    init = sr_init_uniform(maze, 0.95).M
    T = policy_transition_matrix(maze, uniform_policy(maze))
    series, P = np.zeros_like(T), np.eye(T.shape[0])
    for _ in range(3000):
        series += P
        P = 0.95 * P @ T
    errors["init"] = np.abs(init - series).max()
    passed = errors["chain"] < 0.1 and errors["maze"] < 0.1 and errors["init"] < 1e-10
    report(3, passed, f"chain {errors['chain']:.4f}, maze ({len(visited)} on-policy rows) "
                      f"{errors['maze']:.2e}, init {errors['init']:.2e}")
    assert passed


def test_lambda_one_learns_faster(report):
    maze = DynaMaze()
    policy = heatmap_policy(maze, 0.1)
    truth = sr_closed_form(policy_transition_matrix(maze, policy), 0.95)[maze.start_state]
    wins = 0
    for seed in range(20):
        err = {}
        for lam in (0.0, 1.0):
            sr, _, _ = learn_sr_fixed_policy(maze, policy, 10, lam=lam, lr=0.1,
                                             rng=np.random.default_rng(seed))
            err[lam] = np.linalg.norm(sr.M[maze.start_state] - truth)
        wins += err[1.0] < err[0.0]
    passed = wins >= 16
    report(4, passed, f"lambda=1 lower start-row error in {wins}/20 seeds")
    assert passed


def test_gradient_checks(report):
    rng = np.random.default_rng(2024)
    h = 1e-5
    worst = 0.0
    for k in range(50):
        sr = LinearApproxSR(6, 4, 3, gamma=0.9, frozen_encoder=bool(k % 2), rng=rng, init_scale=0.5)
        s, s2 = rng.normal(size=6), rng.normal(size=6)
        a, a2 = int(rng.integers(3)), int(rng.integers(3))
        terminal = bool(rng.random() < 0.2)
        rep = sr.losses(s, a, s2, terminal, a2)
        target = sr.bootstrap_target(s2, a2, terminal)
        theta = sr.get_params()

        def losses(t):
            probe = sr.copy()
            probe.set_params(t)
            phi = probe.W_f @ s
            rg = s - probe.W_g @ phi
            ru = phi + target - probe.U[a] @ phi
            return np.array([rg @ rg, ru @ ru])

        fd = np.zeros((2, theta.size))
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd[:, i] = (losses(theta + e) - losses(theta - e)) / (2 * h)
        for analytic, numeric in ((rep.grad_g, fd[0]), (rep.grad_u, fd[1])):
            scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
            worst = max(worst, np.linalg.norm(analytic - numeric) / scale)
    passed = worst < 1e-4
    report(5, passed, f"worst relative error {worst:.2e} over 50 parameterizations")
    assert passed


def test_projection_need_matches_tabular(report):
    env = Chain(5, 0.9)
    policy = np.tile([0.1, 0.9], (5, 1))
    truth = sr_closed_form(policy_transition_matrix(env, policy), 0.9)
    sr = LinearApproxSR.one_hot(5, 2, gamma=0.9)
    eye = np.eye(5)
    # expected semi-gradient over the policy's transition model, all (s, a) pairs per sweep
    for _ in range(3000):
        grad = np.zeros(sr.param_count)
        for s in range(5):
            for a in range(2):
                nxt, _, term = env.transition(s, a)
                for a2 in range(2):
                    grad += policy[nxt, a2] * sr.losses(eye[s], a, eye[nxt], term, a2).gradients
        sr.apply_gradients(grad, 0.05)
    need = np.zeros((5, 5))
    for s in range(5):
        m_ref = sum(policy[s, a] * sr.sr_vector(eye[s], a) for a in range(2))
        need[s] = [need_projection(m_ref, sr.encode(eye[j])) for j in range(5)]
    err = np.abs(need - truth).max()
    passed = err < 1e-2
    report(6, passed, f"max |projection need - tabular SR| = {err:.2e}")
    assert passed


def test_need_offset_contract(report):
    rng = np.random.default_rng(15)
    bad = 0
    for _ in range(1000):
        v = rng.normal(size=int(rng.integers(1, 33))) * rng.exponential(5.0)
        out = need_offset(v)
        bad += out.min() < 0 or np.argmax(out) != np.argmax(v)
        pos = np.abs(v)
        bad += not np.array_equal(need_offset(pos), pos)
    passed = bad == 0
    report(7, passed, f"{bad} violations over 1000 mixed-sign and 1000 nonnegative vectors")
    assert passed


def test_per_sr_toy_task(tmp_path, report):
    summary = run_experiment(ExperimentConfig(experiment="toy-persr", out=str(tmp_path)))
    med = {r["algorithm"]: r["median"] for r in summary.aggregates}
    converged = all(r["converged"] for r in summary.raw)

    q = LinearQ(3, 2, gamma=0.9)
    q.theta[:] = [0.1, 0.3, -0.2, 0.4, 0.0, 0.5]
    before = q.theta.copy()
    items = [Transition(0, 1, 0.0, 1, False), Transition(1, 1, 0.0, 2, False),
             Transition(2, 1, 1.0, 2, True)]
    memory = RingMemory(8, 0.6, 1e-8)
    for t in items:
        memory.add(t)
    sr = LinearApproxSR.one_hot(3, 2, gamma=0.9)
    m_ref = np.array([0.5, -0.25, 2.0])
    rec = per_sr_replay_step(q, memory, sr, m_ref, 3, np.random.default_rng(0), step_size=0.25,
                             beta=0.4, indices=[0, 1, 2])
    leaves = np.ones(3)
    expected = np.zeros(6)
    for j, t in enumerate(items):
        bootstrap = 0.0 if t.terminal else 0.9 * max(before[2 * t.next_state], before[2 * t.next_state + 1])
        delta = t.reward + bootstrap - before[2 * t.state + t.action]
        w = (leaves[j] / leaves.min()) ** -0.4
        leaves[j] = abs(delta) ** 0.6
        n = m_ref[t.state] - m_ref.min()
        expected[2 * t.state + t.action] += w * delta * n
    expected *= 0.25
    exact = np.array_equal(rec.q_change, expected) and np.array_equal(q.theta, before + expected)
    passed = med["per-sr"] <= med["per"] and converged and exact
    report(8, passed, f"median updates per={med['per']:g} per-sr={med['per-sr']:g} over 20 seeds; "
                      f"all converged={converged}; hand-computed 3-item change exact={exact}")
    assert passed


def test_sampler_and_determinism(tmp_path, report):
    rng = np.random.default_rng(9)
    p = rng.uniform(0.01, 5.0, size=16)
    sampler = ProportionalSampler(16, alpha=0.6)
    for v in p:
        sampler.add(float(v))
    draws = 100_000
    counts = np.bincount([sampler.sample(rng) for _ in range(draws)], minlength=16)
    expected = p ** 0.6 / (p ** 0.6).sum() * draws
    pvalue = chisquare(counts, expected).pvalue

    runs = [["maze", "--trials", "3", "--episodes", "5"],
            ["cliffwalk", "--trials", "2", "--n-states", "3..6"],
            ["sr-heatmap", "--checkpoints", "1,5"],
            ["toy-persr", "--trials", "3"]]
    identical = True
    for args in runs:
        outputs = []
        for tag in ("a", "b"):
            out = tmp_path / tag / args[0]
            assert cli.main(args + ["--out", str(out)]) == 0
            outputs.append({f.name: f.read_bytes() for f in sorted(out.glob("*.csv"))})
        identical &= outputs[0] == outputs[1] and bool(outputs[0])
    passed = pvalue > 0.001 and identical
    report(9, passed, f"chi-square p={pvalue:.3f} over {draws} draws; "
                      f"double-run CSVs byte-identical={identical}")
    assert passed
