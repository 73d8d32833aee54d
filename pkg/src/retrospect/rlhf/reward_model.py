"""Linear reward model fit on accepted/rejected reflection pairs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..buffer import EmptyBuffer
from ..core import PreferencePair
from ..retro.policy import features, load_array, save_array
from ..retro.prompt import N_FEATURES, ReflectionPrompt
from ..retro.templates import default_library

# Appendix-scale value is 2.5e-5 for a 7B model; rescaled x1000 for the linear scorer.
DEFAULT_RM_LR = 2.5e-2
DEFAULT_RM_STEPS = 2000


@dataclass(frozen=True, eq=False)
class RewardModel:
    """``score(x, y) = phi(x) . w[:, y]``."""

    w: np.ndarray
    train_accuracy: float | None = None
    final_loss: float | None = None

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64, copy=True)
        w.setflags(write=False)
        if not np.all(np.isfinite(w)):
            raise ValueError("reward model weights must be finite")
        object.__setattr__(self, "w", w)

    @classmethod
    def zeros(cls, n_templates: int | None = None) -> "RewardModel":
        return cls(np.zeros((N_FEATURES, n_templates or len(default_library()))))

    def scores(self, prompt: ReflectionPrompt | str | np.ndarray) -> np.ndarray:
        return features(prompt) @ self.w

    def score(self, prompt: ReflectionPrompt | str | np.ndarray, response_id: int) -> float:
        return float(self.scores(prompt)[response_id])


def _stack(pairs: Sequence[PreferencePair]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    phis = np.stack([features(p.instruction) for p in pairs])
    accepted = np.array([p.accepted_id for p in pairs])
    rejected = np.array([p.rejected_id for p in pairs])
    return phis, accepted, rejected


def _margins(w, phis, accepted, rejected) -> np.ndarray:
    logits = phis @ w
    rows = np.arange(len(phis))
    return logits[rows, accepted] - logits[rows, rejected]


def pairwise_loss(w: np.ndarray, phis: np.ndarray, accepted: np.ndarray, rejected: np.ndarray) -> float:
    """Mean of -log sigmoid(score(x, y+) - score(x, y-))."""
    return float(np.mean(np.logaddexp(0.0, -_margins(w, phis, accepted, rejected))))


def pairwise_loss_grad(w: np.ndarray, phis: np.ndarray, accepted: np.ndarray, rejected: np.ndarray) -> np.ndarray:
    margins = _margins(w, phis, accepted, rejected)
    # d/dm softplus(-m) = -sigmoid(-m)
    coef = -0.5 * (1.0 - np.tanh(margins / 2.0)) / len(phis)
    grad = np.zeros_like(w)
    np.add.at(grad.T, accepted, coef[:, None] * phis)
    np.add.at(grad.T, rejected, -coef[:, None] * phis)
    return grad


def pairwise_accuracy(w, phis, accepted, rejected) -> float:
    return float(np.mean(_margins(w, phis, accepted, rejected) > 0))


def fit_reward_model(
    pairs: Sequence[PreferencePair],
    lr: float = DEFAULT_RM_LR,
    steps: int = DEFAULT_RM_STEPS,
    n_templates: int | None = None,
) -> RewardModel:
    """Full-batch gradient descent on the pairwise logistic loss, starting from zero weights."""
    if not pairs:
        raise EmptyBuffer("no preference pairs to fit a reward model on")
    phis, accepted, rejected = _stack(pairs)
    k = n_templates or len(default_library())
    w = np.zeros((phis.shape[1], k))
    for _ in range(steps):
        w -= lr * pairwise_loss_grad(w, phis, accepted, rejected)
    return RewardModel(
        w,
        train_accuracy=pairwise_accuracy(w, phis, accepted, rejected),
        final_loss=pairwise_loss(w, phis, accepted, rejected),
    )


def save_reward_model(rm: RewardModel, path: str | Path) -> None:
    save_array(path, "reward_model", {"w": rm.w})


def load_reward_model(path: str | Path) -> RewardModel:
    return RewardModel(load_array(path, "reward_model")["w"])
