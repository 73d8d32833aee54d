"""Clipped policy-gradient updates for a one-step (bandit) reflection policy.

Each prompt gets a single response, so the per-sample return is the reward
model score minus a KL penalty to the reference policy. Advantages are that
return minus the batch mean, computed once with the pre-update parameters
and held fixed across the inner epochs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from ..retro.policy import NumericalError, RetroPolicy, features, log_softmax
from .reward_model import RewardModel


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 1.4e-2
    ppo_epochs: int = 4
    clip_epsilon: float = 0.2
    beta_kl: float = 0.2
    batch_size: int = 64
    max_steps: int = 200

    def __post_init__(self):
        if self.learning_rate <= 0 or self.ppo_epochs < 1 or self.batch_size < 1 or self.max_steps < 0:
            raise ValueError("invalid PPO configuration")
        if not 0 <= self.clip_epsilon < 1 or self.beta_kl < 0:
            raise ValueError("invalid PPO configuration")


class PPOSample(Protocol):
    instruction: str
    response_id: int
    old_logprob: float


@dataclass(frozen=True)
class Sample:
    instruction: str
    response_id: int
    old_logprob: float


@dataclass(frozen=True)
class PPODiagnostics:
    surrogate: float
    mean_ratio: float
    clip_fraction: float
    mean_kl: float
    mean_score: float
    mean_advantage: float


def _logp(theta: np.ndarray, phis: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(theta)):
        raise NumericalError("theta contains non-finite values")
    return log_softmax(phis @ theta)


def advantages(policy: RetroPolicy, rm: RewardModel, phis: np.ndarray, ids: np.ndarray,
               beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (centred advantages, raw reward-model scores)."""
    rows = np.arange(len(ids))
    scores = (phis @ rm.w)[rows, ids]
    penalty = _logp(policy.theta, phis)[rows, ids] - _logp(policy.reference_theta, phis)[rows, ids]
    returns = scores - beta * penalty
    return returns - returns.mean(), scores


def surrogate(theta, phis, ids, old_logprob, adv, eps) -> float:
    ratio = np.exp(_logp(theta, phis)[np.arange(len(ids)), ids] - old_logprob)
    return float(np.mean(np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)))


def surrogate_grad(theta, phis, ids, old_logprob, adv, eps) -> np.ndarray:
    """Gradient of ``surrogate`` w.r.t. theta; at a tie the unclipped branch is used."""
    logp = _logp(theta, phis)
    rows = np.arange(len(ids))
    ratio = np.exp(logp[rows, ids] - old_logprob)
    unclipped = ratio * adv
    active = unclipped <= np.clip(ratio, 1 - eps, 1 + eps) * adv
    coef = np.where(active, ratio * adv, 0.0) / len(ids)
    onehot = np.zeros_like(logp)
    onehot[rows, ids] = 1.0
    return phis.T @ (coef[:, None] * (onehot - np.exp(logp)))


def ppo_step(policy: RetroPolicy, rm: RewardModel, batch: Sequence[PPOSample],
             cfg: PPOConfig) -> tuple[RetroPolicy, PPODiagnostics]:
    if not batch:
        raise ValueError("empty PPO batch")
    phis = np.stack([features(s.instruction) for s in batch])
    ids = np.array([s.response_id for s in batch])
    old = np.array([s.old_logprob for s in batch], dtype=np.float64)
    adv, scores = advantages(policy, rm, phis, ids, cfg.beta_kl)
    theta = np.array(policy.theta)
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.ppo_epochs):
            theta = theta + cfg.learning_rate * surrogate_grad(theta, phis, ids, old, adv, cfg.clip_epsilon)
            if not np.all(np.isfinite(theta)):
                raise NumericalError("PPO update produced non-finite parameters",
                                     {"epoch": epoch, "mean_score": float(scores.mean()),
                                      "max_abs_advantage": float(np.max(np.abs(adv)))})
    surr = surrogate(theta, phis, ids, old, adv, cfg.clip_epsilon)
    if not np.isfinite(surr):
        raise NumericalError("PPO surrogate is non-finite", {"surrogate": surr})
    logp = _logp(theta, phis)
    ref = _logp(policy.reference_theta, phis)
    ratio = np.exp(logp[np.arange(len(ids)), ids] - old)
    kl = np.maximum(np.sum(np.exp(logp) * (logp - ref), axis=1), 0.0)
    diag = PPODiagnostics(
        surrogate=surr,
        mean_ratio=float(ratio.mean()),
        clip_fraction=float(np.mean(np.abs(ratio - 1) > cfg.clip_epsilon)),
        mean_kl=float(kl.mean()),
        mean_score=float(scores.mean()),
        mean_advantage=float(adv.mean()),
    )
    return policy.with_theta(theta), diag
