"""Environment contract shared by the synthetic environments."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

from ..core import FailureMode, RetrospectError

ACTION_RE = re.compile(r"^\s*([A-Za-z]+)\[(.*)\]\s*$", re.DOTALL)

TASKSET_SCHEMA = "retrospect-taskset"
TASKSET_VERSION = 1


class TaskNotFound(RetrospectError, KeyError):
    pass


class EpisodeOver(RetrospectError):
    pass


@dataclass(frozen=True)
class EnvState:
    observation_text: str
    terminal: bool
    raw: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "raw", MappingProxyType(dict(self.raw)))


@dataclass(frozen=True, eq=False)
class TaskSpec:
    """One task instance.

    ``gold_actions`` and ``failure_actions`` are what the scripted actor
    plays; neither they nor ``hidden_answer`` ever reach an observation.
    """

    env_id: str
    task_id: str
    goal_text: str
    hidden_answer: Any
    failure_mode: FailureMode
    gold_actions: tuple[str, ...]
    failure_actions: tuple[str, ...]
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "failure_mode", FailureMode(self.failure_mode))
        object.__setattr__(self, "gold_actions", tuple(self.gold_actions))
        object.__setattr__(self, "failure_actions", tuple(self.failure_actions))

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "goal_text": self.goal_text,
            "hidden_answer": self.hidden_answer,
            "failure_mode": self.failure_mode.value,
            "gold_actions": list(self.gold_actions),
            "failure_actions": list(self.failure_actions),
            "split": self.split,
        }


def parse_action(action_text: str) -> tuple[str, str] | None:
    match = ACTION_RE.match(action_text)
    if match is None:
        return None
    return match.group(1), match.group(2).strip()


class Environment:
    """Base class: deterministic text environment over a fixed world.

    Subclasses implement ``_initial``, ``_transition`` and ``episode_return``.
    States are immutable; ``step`` returns a fresh state.
    """

    env_id: str = ""
    verbs: tuple[str, ...] = ()
    default_max_steps: int = 10
    success_threshold: float = 1.0

    def __init__(self, world: dict, tasks: list[TaskSpec], seed: int = 0):
        self.world = world
        self.seed = seed
        self.tasks: dict[str, TaskSpec] = {t.task_id: t for t in tasks}

    def split(self, name: str) -> list[TaskSpec]:
        return [t for t in self.tasks.values() if t.split == name]

    def get_task(self, task_id: str) -> TaskSpec:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise TaskNotFound(f"{self.env_id} has no task {task_id!r}") from None

    def reset(self, task: TaskSpec, seed: int = 0) -> EnvState:
        if task.env_id != self.env_id or task.task_id not in self.tasks:
            raise TaskNotFound(f"task {task.env_id}/{task.task_id} does not belong to {self.env_id}")
        observation, raw = self._initial(task, seed)
        raw = {"task_id": task.task_id, "seed": seed, **raw}
        return EnvState(observation, False, raw)

    def step(self, state: EnvState, action_text: str) -> tuple[EnvState, float]:
        if state.terminal:
            raise EpisodeOver("step called on a terminal state")
        task = self.get_task(state.raw["task_id"])
        parsed = parse_action(action_text)
        if parsed is None or parsed[0] not in self.verbs:
            allowed = ", ".join(f"{v}[...]" for v in self.verbs)
            return EnvState(f"Invalid action: {action_text.strip()}. Valid actions: {allowed}.", False, state.raw), 0.0
        verb, arg = parsed
        observation, raw, terminal = self._transition(task, dict(state.raw), verb, arg)
        new_state = EnvState(observation, terminal, raw)
        reward = self.episode_return(new_state) if terminal else 0.0
        return new_state, reward

    def episode_return(self, state: EnvState) -> float:
        raise NotImplementedError

    def _initial(self, task: TaskSpec, seed: int) -> tuple[str, dict]:
        raise NotImplementedError

    def _transition(self, task: TaskSpec, raw: dict, verb: str, arg: str) -> tuple[str, dict, bool]:
        raise NotImplementedError

    # serialization

    def to_json(self) -> dict:
        return {
            "schema": TASKSET_SCHEMA,
            "version": TASKSET_VERSION,
            "env_id": self.env_id,
            "seed": self.seed,
            "world": self.world,
            "tasks": [t.to_dict() for t in self.tasks.values()],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, payload: dict) -> "Environment":
        tasks = [TaskSpec(env_id=payload["env_id"], **t) for t in payload["tasks"]]
        return cls(payload["world"], tasks, seed=payload.get("seed", 0))
