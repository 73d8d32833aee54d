"""Best-of-n reflection selection scored by the reward model."""

from __future__ import annotations

from dataclasses import dataclass

from .retro.policy import RetroPolicy, sample_with
from .retro.prompt import ReflectionPrompt
from .rlhf.reward_model import RewardModel
from .seeding import rng

DEFAULT_N = 4


@dataclass(frozen=True)
class Draw:
    response_id: int
    response_text: str
    score: float


def best_of_n_draws(policy: RetroPolicy, rm: RewardModel, prompt: ReflectionPrompt | str, n: int = DEFAULT_N,
                    temperature: float = 1.0, seed: int = 0) -> tuple[Draw, list[Draw]]:
    """Return the chosen draw plus every draw made, in order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rng(seed)
    draws = []
    for _ in range(n):
        k, text, _ = sample_with(policy, prompt, temperature, gen)
        draws.append(Draw(k, text, rm.score(prompt, k)))
    best = min(draws, key=lambda d: (-d.score, d.response_id))
    return best, draws


def best_of_n(policy: RetroPolicy, rm: RewardModel, prompt: ReflectionPrompt | str, n: int = DEFAULT_N,
              temperature: float = 1.0, seed: int = 0) -> tuple[int, str]:
    best, _ = best_of_n_draws(policy, rm, prompt, n, temperature, seed)
    return best.response_id, best.response_text
