"""Terminal reward functions for the three environments.

All three return values in [0, 1]:

* ``f1_reward``: token-level F1 between a generated and a gold answer.
* ``binary_reward``: 1 for goal satisfied, 0 otherwise.
* ``shop_reward``: type match times the fraction of matched attributes,
  options and the price constraint.
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass

# Fixed so that F1 values are bit-reproducible across runs and platforms.
STOPWORDS: frozenset[str] = frozenset(
    {
        "a", "an", "the", "and", "or", "of", "in", "on", "at", "to",
        "for", "with", "by", "from", "is", "are", "was", "were", "be", "been",
        "it", "its", "this", "that", "as", "but", "not", "no", "do", "does",
    }
)
assert len(STOPWORDS) == 30

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split, drop stopwords."""
    return [tok for tok in text.lower().translate(_PUNCT_TABLE).split() if tok not in STOPWORDS]


def f1_reward(generated: str, gold: str) -> float:
    gen = normalize_tokens(generated)
    ref = normalize_tokens(gold)
    if not gen or not ref:
        return 0.0
    common = sum((Counter(gen) & Counter(ref)).values())
    if common == 0:
        return 0.0
    precision = common / len(gen)
    recall = common / len(ref)
    return 2 * precision * recall / (precision + recall)


def binary_reward(goal_satisfied: bool) -> float:
    return 1.0 if goal_satisfied else 0.0


@dataclass(frozen=True)
class ShopTarget:
    U_att: frozenset[str]
    U_opt: frozenset[str]
    u_price: float
    type_text: str

    def __post_init__(self):
        object.__setattr__(self, "U_att", frozenset(self.U_att))
        object.__setattr__(self, "U_opt", frozenset(self.U_opt))
        if not self.u_price > 0:
            raise ValueError("u_price must be positive")


@dataclass(frozen=True)
class ShopChoice:
    Y_att: frozenset[str]
    Y_opt: frozenset[str]
    y_price: float
    type_text: str

    def __post_init__(self):
        object.__setattr__(self, "Y_att", frozenset(self.Y_att))
        object.__setattr__(self, "Y_opt", frozenset(self.Y_opt))
        if self.y_price < 0:
            raise ValueError("y_price must be non-negative")


def type_match(target_type: str, choice_type: str) -> float:
    """1 if the two product types share at least one normalized token."""
    return 1.0 if set(normalize_tokens(target_type)) & set(normalize_tokens(choice_type)) else 0.0


def shop_reward(target: ShopTarget, choice: ShopChoice) -> float:
    r_type = type_match(target.type_text, choice.type_text)
    matched = (
        len(target.U_att & choice.Y_att)
        + len(target.U_opt & choice.Y_opt)
        + (1 if choice.y_price <= target.u_price else 0)
    )
    return r_type * matched / (len(target.U_att) + len(target.U_opt) + 1)
