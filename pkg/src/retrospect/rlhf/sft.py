"""Supervised warm start on reflections that improved the next trial."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import ReflectionRecord, RetrospectError
from ..retro.policy import RetroPolicy, features, probs_from_theta

DEFAULT_SFT_LR = 1e-2
DEFAULT_SFT_EPOCHS = 2
DEFAULT_SFT_BATCH = 32


class ContaminatedSFTSet(RetrospectError, ValueError):
    pass


def sft_loss(theta: np.ndarray, phis: np.ndarray, ids: np.ndarray) -> float:
    """Mean negative log-likelihood of the target templates."""
    logits = phis @ theta
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.mean(logp[np.arange(len(ids)), ids]))


def sft_grad(theta: np.ndarray, phis: np.ndarray, ids: np.ndarray) -> np.ndarray:
    p = np.stack([probs_from_theta(theta, phi) for phi in phis])
    onehot = np.zeros_like(p)
    onehot[np.arange(len(ids)), ids] = 1.0
    return -phis.T @ (onehot - p) / len(ids)


def sft_warm_start(
    policy: RetroPolicy,
    positives: Sequence[ReflectionRecord],
    epochs: int = DEFAULT_SFT_EPOCHS,
    lr: float = DEFAULT_SFT_LR,
    batch_size: int = DEFAULT_SFT_BATCH,
) -> RetroPolicy:
    """Minibatch gradient descent on the NLL, visiting records in buffer order."""
    if not positives:
        raise ContaminatedSFTSet("SFT set is empty")
    bad = [r for r in positives if not r.rating > 0]
    if bad:
        raise ContaminatedSFTSet(f"{len(bad)} SFT records have rating <= 0")
    phis = np.stack([features(r.instruction) for r in positives])
    ids = np.array([r.response_id for r in positives])
    theta = np.array(policy.theta)
    for _ in range(epochs):
        for start in range(0, len(ids), batch_size):
            sl = slice(start, start + batch_size)
            theta -= lr * sft_grad(theta, phis[sl], ids[sl])
    return policy.with_theta(theta)
