"""Learning agents: prioritized sweeping, the Cliffwalk replay schemes and PER-SR."""

from .cliffwalk import (NEED_SCHEMES, SCHEMES, CliffwalkConfig, CliffwalkLearner, CliffwalkResult,
                        cliffwalk_run, need_weighted_probabilities)
from .per_sr import PERSRAgent, ReplayStepRecord, RingMemory, ToyConfig, ToyResult, per_sr_replay_step, toy_run
from .sweeping import PrioritizedSweepingAgent, StepRecord
from .tabular import DeterministicModel, LinearQ, QTable, epsilon_greedy

__all__ = [
    "NEED_SCHEMES", "SCHEMES", "CliffwalkConfig", "CliffwalkLearner", "CliffwalkResult",
    "cliffwalk_run", "need_weighted_probabilities", "PERSRAgent", "ReplayStepRecord",
    "RingMemory", "ToyConfig", "ToyResult", "per_sr_replay_step", "toy_run",
    "PrioritizedSweepingAgent", "StepRecord", "DeterministicModel", "LinearQ", "QTable",
    "epsilon_greedy",
]
