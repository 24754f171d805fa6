import numpy as np
import pytest

from need_replay.agents.cliffwalk import (CliffwalkConfig, CliffwalkLearner, SCHEMES, cliffwalk_run,
                                          need_weighted_probabilities)
from need_replay.agents.per_sr import (PERSRAgent, RingMemory, ToyConfig, per_sr_replay_step,
                                       toy_run)
from need_replay.agents.sweeping import PrioritizedSweepingAgent
from need_replay.agents.tabular import DeterministicModel, LinearQ, QTable, epsilon_greedy
from need_replay.envs import Chain, DynaMaze, UP
from need_replay.errors import InsufficientDataError, NoMassError
from need_replay.replay_core import Transition
from need_replay.sr_approx import LinearApproxSR
from need_replay.sr_tabular import SRMatrix


class FixedQ:
    def __init__(self, values, epsilon):
        self.v = np.asarray(values, dtype=float)
        self.epsilon = epsilon
        self.action_count = self.v.size

    def values(self, state):
        return self.v


class TestEpsilonGreedy:
    def test_greedy(self):
        assert epsilon_greedy(FixedQ([1, 2], 0.0), 0, np.random.default_rng(0)) == 1

    def test_tie_lowest(self):
        assert epsilon_greedy(FixedQ([3, 3], 0.0), 0, np.random.default_rng(0)) == 0

    def test_uniform_when_epsilon_one(self):
        rng = np.random.default_rng(0)
        q = FixedQ([0, 5, 0, 0], 1.0)
        freq = np.bincount([epsilon_greedy(q, 0, rng) for _ in range(10_000)], minlength=4) / 10_000
        np.testing.assert_allclose(freq, 0.25, atol=0.02)

    def test_random_ties(self):
        rng = np.random.default_rng(0)
        q = FixedQ([1, 0, 1, 1], 0.0)
        picks = {epsilon_greedy(q, 0, rng, random_ties=True) for _ in range(300)}
        assert picks == {0, 2, 3}


class TestQContainers:
    def test_qtable_update(self):
        q = QTable(3, 2, alpha=0.5, gamma=0.9)
        q.Q[1] = [0.0, 2.0]
        delta = q.update(0, 1, 1.0, 1, False)
        assert delta == pytest.approx(1.0 + 1.8)
        assert q.Q[0, 1] == pytest.approx(0.5 * 2.8)
        assert q.td_error(0, 0, 1.0, 1, True) == 1.0

    def test_linear_q_features(self):
        q = LinearQ(3, 2)
        q.theta[:] = np.arange(6)
        assert q.q(2, 1) == 5
        np.testing.assert_array_equal(q.features(1, 0), np.eye(6)[2])
        assert q.q(1, 0) == q.theta @ q.features(1, 0)
        np.testing.assert_array_equal(q.table(), np.arange(6).reshape(3, 2))


class TestModel:
    def test_forward_and_reverse(self):
        m = DeterministicModel()
        m.store(0, 1, 0.0, 5, False)
        m.store(2, 0, 1.0, 5, True)
        assert m.predict(2, 0) == (1.0, 5, True)
        assert sorted(m.predecessors(5)) == [(0, 1, 0.0), (2, 0, 1.0)]

    def test_overwrite_moves_reverse_entry(self):
        m = DeterministicModel()
        m.store(0, 1, 0.0, 5, False)
        m.store(0, 1, 0.0, 6, False)
        assert list(m.predecessors(5)) == []
        assert list(m.predecessors(6)) == [(0, 1, 0.0)]
        assert len(m) == 1


class TestPrioritizedSweeping:
    def test_first_step_queues_nothing(self):
        env = DynaMaze(rng=np.random.default_rng(0))
        agent = PrioritizedSweepingAgent(env, rng=np.random.default_rng(0))
        rec = agent.step()
        assert rec.priority == 0.0 and rec.planning_updates == 0 and len(agent.queue) == 0

    def test_goal_entry_triggers_planning(self):
        env = DynaMaze(rng=np.random.default_rng(0))
        agent = PrioritizedSweepingAgent(env, epsilon=0.0, rng=np.random.default_rng(0))
        below_goal = env.state_id((1, 8))
        two_below = env.state_id((2, 8))
        agent.model.store(two_below, UP, 0.0, below_goal, False)
        agent.state = env.current_state = below_goal
        agent.q.Q[below_goal] = [0.0, -1.0, -1.0, -1.0]  # greedy action is UP
        rec = agent.step()
        assert rec.terminal and rec.priority == pytest.approx(1.0, abs=0.5)
        assert rec.planning_updates >= 1
        assert agent.q.Q[below_goal, UP] > 0
        # the predecessor of the updated state was swept and then updated too
        assert agent.q.Q[two_below, UP] > 0

    def test_ps_sr_with_constant_need_matches_ps(self):
        curves = []
        for use_need in (False, True):
            rng = np.random.default_rng(3)
            env = DynaMaze(rng=rng)
            sr = SRMatrix(np.ones((54, 54)), 0.95, lam=0.5, lr=0.0) if use_need else None
            agent = PrioritizedSweepingAgent(env, use_need=use_need, rng=rng, sr=sr)
            curves.append(([agent.run_episode() for _ in range(8)], agent.q.Q.copy()))
        assert curves[0][0] == curves[1][0]
        np.testing.assert_array_equal(curves[0][1], curves[1][1])

    def test_reference_options(self):
        env = DynaMaze(rng=np.random.default_rng(0))
        for ref in ("next", "current", "popped"):
            agent = PrioritizedSweepingAgent(env, use_need=True, need_reference=ref,
                                             rng=np.random.default_rng(0))
            assert agent.run_episode() > 0
        with pytest.raises(ValueError):
            PrioritizedSweepingAgent(env, need_reference="elsewhere")

    def test_learns_short_path(self):
        rng = np.random.default_rng(1)
        agent = PrioritizedSweepingAgent(DynaMaze(rng=rng), use_need=True, rng=rng)
        steps = [agent.run_episode() for _ in range(30)]
        assert np.mean(steps[-10:]) < 25


class TestNeedWeightedProbabilities:
    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = rng.exponential(size=20) * (rng.random(20) < 0.8)
            n = rng.exponential(size=20)
            if np.all(p * n == 0):
                continue
            probs = need_weighted_probabilities(p, n, 0.6)
            assert probs.sum() == pytest.approx(1.0)

    def test_constant_need_is_per(self):
        p = np.array([0.1, 2.0, 0.7])
        np.testing.assert_allclose(need_weighted_probabilities(p, np.full(3, 3.7), 0.6),
                                   p ** 0.6 / (p ** 0.6).sum())

    def test_no_mass(self):
        with pytest.raises(NoMassError):
            need_weighted_probabilities([1.0, 0.0], [0.0, 5.0], 0.6)


class TestCliffwalk:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_every_scheme_converges(self, scheme):
        for n in (3, 5):
            r = cliffwalk_run(scheme, n, seed=0)
            assert r.converged and r.final_mse < 1e-3 and r.q_updates > 0

    def test_oracle_is_lower_bound_small_n(self):
        counts = {s: np.median([cliffwalk_run(s, 3, k).q_updates for k in range(5)]) for s in SCHEMES}
        assert counts["oracle"] == min(counts.values())

    def test_deterministic(self):
        assert cliffwalk_run("need", 5, 7) == cliffwalk_run("need", 5, 7)

    def test_budget_censors(self):
        r = cliffwalk_run("uniform", 6, 0, CliffwalkConfig(budget=10))
        assert not r.converged and r.q_updates == 10

    def test_buffer_prefilled_and_fixed(self):
        learner = CliffwalkLearner("per", 4, 0)
        size = len(learner.memory)
        learner.run()
        assert len(learner.memory) == size == 2 ** (4 + 1) - 2

    def test_minibatch_accumulates(self):
        r = cliffwalk_run("need", 5, 0, CliffwalkConfig(minibatch=3))
        assert r.converged and r.q_updates % 3 == 0

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            cliffwalk_run("greedy", 3, 0)


def tiny_memory(items, alpha=0.6):
    mem = RingMemory(16, alpha, 1e-8)
    for t in items:
        mem.add(t)
    return mem


CHAIN_ITEMS = [Transition(0, 1, 0.0, 1, False), Transition(1, 1, 0.0, 2, False),
               Transition(2, 1, 1.0, 2, True), Transition(1, 0, 0.0, 0, False)]


class TestPerSrStep:
    def setup_q(self):
        q = LinearQ(3, 2, gamma=0.9)
        q.theta[:] = [0.1, 0.3, -0.2, 0.4, 0.0, 0.5]
        return q

    def test_hand_computed_weight_change(self):
        q = self.setup_q()
        mem = tiny_memory(CHAIN_ITEMS)
        sr = LinearApproxSR.one_hot(3, 2, gamma=0.9, lr=0.0)
        m_ref = np.array([0.5, -0.25, 2.0])
        before = q.theta.copy()
        rec = per_sr_replay_step(q, mem, sr, m_ref, 3, np.random.default_rng(0), step_size=0.25,
                                 beta=0.4, indices=[0, 1, 2])
        # hand computation
        th = before
        d0 = 0.0 + 0.9 * max(th[2], th[3]) - th[1]
        d1 = 0.0 + 0.9 * max(th[4], th[5]) - th[3]
        d2 = 1.0 - th[5]
        need = np.array([0.5, -0.25, 2.0]) + 0.25
        # all four leaves start at 1; each replayed leaf drops to |delta|^alpha before the next draw
        leaves = np.ones(4)
        weights = []
        for j, d in enumerate((d0, d1, d2)):
            weights.append((leaves[j] / leaves.min()) ** -0.4)
            leaves[j] = abs(d) ** 0.6
        expected = np.zeros(6)
        for idx, d, n, w in zip((1, 3, 5), (d0, d1, d2), need, weights):
            expected[idx] += w * d * n
        expected *= 0.25
        np.testing.assert_allclose(rec.deltas, [d0, d1, d2], atol=1e-15)
        np.testing.assert_allclose(rec.needs, need, atol=1e-15)
        np.testing.assert_allclose(rec.weights, weights, rtol=1e-12)
        np.testing.assert_allclose(q.theta, before + rec.q_change, rtol=0, atol=0)
        np.testing.assert_allclose(rec.q_change, expected, atol=1e-15)
        assert max(rec.weights) <= 1.0

    def test_importance_weights(self):
        q = self.setup_q()
        mem = tiny_memory(CHAIN_ITEMS, alpha=1.0)
        for i, p in enumerate((1.0, 2.0, 4.0, 8.0)):
            mem.sampler.update(i, p)
        rec = per_sr_replay_step(q, mem, None, None, 2, np.random.default_rng(0), 0.1, beta=1.0,
                                 use_need=False, indices=[0, 3])
        # w_j = (P(j) / P_min)^-beta; slot 0 is the rarest, then drops to |delta_0|
        d0 = abs(rec.deltas[0])
        np.testing.assert_allclose(rec.weights, [1.0, min(d0, 2.0) / 8])

    def test_unit_needs_match_plain_per(self):
        results = []
        for use_need in (False, True):
            q = self.setup_q()
            mem = tiny_memory(CHAIN_ITEMS)
            sr = LinearApproxSR.one_hot(3, 2, lr=0.0)
            rec = per_sr_replay_step(q, mem, sr, np.ones(3), 4, np.random.default_rng(5), 0.25,
                                     use_need=use_need)
            results.append((rec.indices, q.theta.copy()))
        assert results[0][0] == results[1][0]
        np.testing.assert_array_equal(results[0][1], results[1][1])

    def test_zero_need_refreshes_priority_only(self):
        q = self.setup_q()
        mem = tiny_memory(CHAIN_ITEMS)
        sr = LinearApproxSR.one_hot(3, 2, lr=0.0)
        m_ref = np.array([-1.0, 1.0, 1.0])  # state 0 gets need 0 after the offset
        rec = per_sr_replay_step(q, mem, sr, m_ref, 2, np.random.default_rng(0), 0.25,
                                 indices=[0, 1])
        assert rec.needs[0] == 0.0
        assert rec.q_change[q.index(0, 1)] == 0.0
        assert mem.sampler.priority(0) == pytest.approx(abs(rec.deltas[0]))

    def test_priorities_refreshed(self):
        q = self.setup_q()
        mem = tiny_memory(CHAIN_ITEMS)
        rec = per_sr_replay_step(q, mem, None, None, 3, np.random.default_rng(2), 0.25,
                                 use_need=False)
        last = {}
        for j, d in zip(rec.indices, rec.deltas):
            last[j] = abs(d)
        for j, p in last.items():
            assert mem.sampler.priority(j) == pytest.approx(p)

    def test_insufficient_data(self):
        mem = tiny_memory(CHAIN_ITEMS[:2])
        with pytest.raises(InsufficientDataError):
            per_sr_replay_step(self.setup_q(), mem, None, None, 3, np.random.default_rng(0), 0.1,
                               use_need=False)

    def test_sr_head_trained(self):
        q = self.setup_q()
        mem = tiny_memory(CHAIN_ITEMS)
        sr = LinearApproxSR.one_hot(3, 2, lr=0.1)
        before = sr.U.copy()
        per_sr_replay_step(q, mem, sr, np.ones(3), 3, np.random.default_rng(0), 0.25)
        assert not np.array_equal(before, sr.U)


class TestToyRun:
    def test_converges(self):
        for alg in ("per", "per-sr"):
            r = toy_run(alg, 0)
            assert r.converged and r.final_mse < 1e-3

    def test_deterministic(self):
        assert toy_run("per-sr", 4).q_updates == toy_run("per-sr", 4).q_updates

    def test_agent_records(self):
        agent = PERSRAgent(True, 0, ToyConfig(minibatch=2))
        recs = [agent.step() for _ in range(5)]
        assert recs[0] is None and recs[1] is not None
        assert agent.q_updates == 2 * 4

    def test_unknown(self):
        with pytest.raises(ValueError):
            toy_run("dqn", 0)
