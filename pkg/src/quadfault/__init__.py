"""quadfault: a desk-scale lab for fault-tolerant quadruped locomotion.

Pieces:
  simulator   - deterministic planar quadruped with failure-aware torques
  failure     - per-episode (leg, k) failure sampling and bookkeeping
  curriculum  - adaptive/linear/uniform/fixed failure-coefficient schedules
  agent       - from-scratch PPO (manual backprop, GAE, Adam)
  training    - orchestrator tying the above together, with checkpoints
  evaluation  - plain/broken/k-sweep protocols, comparisons, plots
  cli         - `quadfault` command line on top of everything
"""

from .agent import (PolicyParams, PPOConfig, Trajectory, act, act_deterministic,
                    compute_gae, init_policy, ppo_update)
from .curriculum import CurriculumState, lcdr_interval, make_curriculum
from .evaluation import (EvalCondition, EvalReport, broken_condition, compare,
                         evaluate, evaluate_checkpoint, k_sweep_condition,
                         plain_condition)
from .failure import FailureSpec, apply_failure, rng_stream, sample_failure, sample_k, sample_leg
from .simulator import EpisodeFinished, PlanarQuadruped, SimConfig, reward
from .training import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "PolicyParams", "PPOConfig", "Trajectory", "act", "act_deterministic",
    "compute_gae", "init_policy", "ppo_update",
    "CurriculumState", "lcdr_interval", "make_curriculum",
    "EvalCondition", "EvalReport", "broken_condition", "compare", "evaluate",
    "evaluate_checkpoint", "k_sweep_condition", "plain_condition",
    "FailureSpec", "apply_failure", "rng_stream", "sample_failure", "sample_k",
    "sample_leg",
    "EpisodeFinished", "PlanarQuadruped", "SimConfig", "reward",
    "TrainConfig", "TrainResult", "train",
    "__version__",
]
