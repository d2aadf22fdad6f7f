"""pensim: batch-vectorized network penetration-testing simulation with
procedurally generated, guaranteed-solvable scenarios and a masked-PPO
training stack (flat and two-stage action selection, DR/PLR curricula)."""

from .actions import ActionDescriptor, ActionKind, ActionSpaceSpec, action_count, compute_mask, decode_action, encode_action
from .batch import BatchEnv
from .config import (
    EnvConfig,
    ExperimentConfig,
    GenerationParams,
    PLRConfig,
    PPOConfig,
    load_env_preset,
    load_train_preset,
)
from .env import NetworkState, Observation, ObsLayout, Outcome, accumulate_history, reset, scale_reward, step
from .estimator import PentestPPO
from .evaluate import EvalReport, evaluate_policy
from .generation import (
    HostRecord,
    Scenario,
    active_subnets,
    generate_scenario,
    scenario_from_bytes,
    scenario_to_bytes,
    scenario_to_text,
)
from .oracle import AttackPlan, InfeasibleScenarioError, count_active_hosts, replay_plan, solve
from .policy import PolicyArchitecture, init_params, load_checkpoint, save_checkpoint
from .ppo import Adam, compute_gae, ppo_loss_2sas, ppo_loss_flat
from .trainer import TrainOutcome, train
from .ued import LevelBuffer, gradient_gate, replay_distribution, score_maxmc, score_pvl, update_buffer

__version__ = "0.1.0"

__all__ = [
    "ActionDescriptor", "ActionKind", "ActionSpaceSpec", "action_count", "compute_mask",
    "decode_action", "encode_action", "BatchEnv", "EnvConfig", "ExperimentConfig",
    "GenerationParams", "PLRConfig", "PPOConfig", "load_env_preset", "load_train_preset",
    "NetworkState", "Observation", "ObsLayout", "Outcome", "accumulate_history", "reset",
    "scale_reward", "step", "PentestPPO", "EvalReport", "evaluate_policy", "HostRecord",
    "Scenario", "active_subnets", "generate_scenario", "scenario_from_bytes",
    "scenario_to_bytes", "scenario_to_text", "AttackPlan", "InfeasibleScenarioError",
    "count_active_hosts", "replay_plan", "solve", "PolicyArchitecture", "init_params",
    "load_checkpoint", "save_checkpoint", "Adam", "compute_gae", "ppo_loss_2sas",
    "ppo_loss_flat", "TrainOutcome", "train", "LevelBuffer", "gradient_gate",
    "replay_distribution", "score_maxmc", "score_pvl", "update_buffer",
]
