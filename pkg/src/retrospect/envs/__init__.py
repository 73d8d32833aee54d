"""Synthetic text environments and the rollout loop."""

from __future__ import annotations

import json
from pathlib import Path

from .base import (
    Environment,
    EnvState,
    EpisodeOver,
    TaskNotFound,
    TaskSpec,
    parse_action,
)
from .house import SynthHouse
from .qa import SynthQA
from .rollout import RolloutAborted, rollout
from .shop import SynthShop

ENVIRONMENTS: dict[str, type[Environment]] = {
    SynthQA.env_id: SynthQA,
    SynthHouse.env_id: SynthHouse,
    SynthShop.env_id: SynthShop,
}


def make_env(env_id: str, seed: int = 0, n_train: int = 50, n_val: int = 30) -> Environment:
    try:
        cls = ENVIRONMENTS[env_id]
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls.generate(seed=seed, n_train=n_train, n_val=n_val)


def load_env(path: str | Path) -> Environment:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return ENVIRONMENTS[payload["env_id"]].from_json(payload)


__all__ = [
    "ENVIRONMENTS", "EnvState", "Environment", "EpisodeOver", "RolloutAborted", "SynthHouse", "SynthQA",
    "SynthShop", "TaskNotFound", "TaskSpec", "load_env", "make_env", "parse_action", "rollout",
]
