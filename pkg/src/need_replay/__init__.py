"""Experience-replay prioritization by TD error and successor-representation need."""

from .errors import (ConfigError, ContractViolation, DegenerateFeatureError, EmptyQueueError,
                     InsufficientDataError, NeedReplayError, NoMassError, NumericalError,
                     ShapeError, UnreachableError)
from .replay_core import MaxPriorityQueue, ProportionalSampler, QueueEntry, Transition
from .sr_approx import LinearApproxSR, SRLossReport, need_offset, need_projection
from .sr_tabular import EligibilityTrace, SRMatrix, sr_closed_form, sr_init_uniform

__version__ = "0.1.0"
