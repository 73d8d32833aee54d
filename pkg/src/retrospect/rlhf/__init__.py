"""Warm start, reward modelling and PPO for the reflection policy."""

from .pipeline import (
    PipelineConfig,
    PipelineResult,
    collect,
    corrective_probability,
    run_pipeline,
    stage,
    train_policy,
    train_reward_model,
)
from .ppo import (
    PPOConfig,
    PPODiagnostics,
    Sample,
    advantages,
    ppo_step,
    surrogate,
    surrogate_grad,
)
from .reward_model import (
    RewardModel,
    fit_reward_model,
    load_reward_model,
    pairwise_accuracy,
    pairwise_loss,
    pairwise_loss_grad,
    save_reward_model,
)
from .sft import ContaminatedSFTSet, sft_grad, sft_loss, sft_warm_start

__all__ = [
    "ContaminatedSFTSet", "PPOConfig", "PPODiagnostics", "PipelineConfig", "PipelineResult", "RewardModel",
    "Sample", "advantages", "collect", "corrective_probability", "fit_reward_model", "load_reward_model",
    "pairwise_accuracy", "pairwise_loss", "pairwise_loss_grad", "ppo_step", "run_pipeline",
    "save_reward_model", "sft_grad", "sft_loss", "sft_warm_start", "stage", "surrogate", "surrogate_grad",
    "train_policy", "train_reward_model",
]
