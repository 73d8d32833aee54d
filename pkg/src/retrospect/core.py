"""Domain types shared across the package.

Everything here is an immutable value. Text is opaque at this layer; the
environments and the retrospective policy give it meaning.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class RetrospectError(Exception):
    """Base class for all package errors."""


class IdentityMismatch(RetrospectError):
    pass


class TrialOrder(RetrospectError):
    pass


class InvalidRecord(RetrospectError, ValueError):
    pass


class FailureMode(str, enum.Enum):
    """Error pattern a scripted actor exhibits until a reflection corrects it."""

    NONE = "none"
    PREMATURE_FINISH = "premature_finish"
    WRONG_ENTITY = "wrong_entity"
    LOOP_REPEAT = "loop_repeat"
    MISSED_LOOKUP = "missed_lookup"
    WRONG_OPTION = "wrong_option"


@dataclass(frozen=True)
class Step:
    timestep: int
    state_text: str
    action_text: str
    reward: float

    def __post_init__(self):
        if self.timestep < 1:
            raise ValueError(f"timestep must be >= 1, got {self.timestep}")
        if not self.action_text:
            raise ValueError("action_text must be non-empty")


@dataclass(frozen=True)
class Trajectory:
    """One trial of one task: ordered steps plus the terminal episode return."""

    env_id: str
    task_id: str
    trial_index: int
    steps: tuple[Step, ...]
    episode_return: float
    success: bool
    final_observation: str = ""

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.trial_index < 1:
            raise ValueError(f"trial_index must be >= 1, got {self.trial_index}")
        for expected, step in enumerate(self.steps, start=1):
            if step.timestep != expected:
                raise ValueError(
                    f"timesteps must run 1..n without gaps; got {step.timestep} at position {expected}"
                )
        if not 0.0 <= self.episode_return <= 1.0:
            raise ValueError(f"episode_return must lie in [0, 1], got {self.episode_return}")
        if self.success and self.episode_return < 1.0:
            raise ValueError("a successful trajectory needs episode_return >= 1.0")

    @property
    def key(self) -> tuple[str, str]:
        return (self.env_id, self.task_id)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class ReflectionRecord:
    """Replay-buffer entry: reflection prompt, sampled response, and the returns around it.

    Construction does not validate, so that records read back from disk can be
    checked explicitly with :meth:`validate`.
    """

    env_id: str
    task_id: str
    trial_index: int
    instruction: str
    response_id: int
    response_text: str
    return_before: float
    return_after: float
    rating: float
    old_logprob: float = 0.0
    sample_temperature: float = 1.0

    def validate(self) -> None:
        for name in ("return_before", "return_after", "rating", "old_logprob"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidRecord(f"{name} is not finite")
        if not (0.0 <= self.return_before <= 1.0 and 0.0 <= self.return_after <= 1.0):
            raise InvalidRecord("returns must lie in [0, 1]")
        if self.rating != self.return_after - self.return_before:
            raise InvalidRecord(
                f"rating {self.rating!r} != return_after - return_before "
                f"({self.return_after!r} - {self.return_before!r})"
            )
        if self.response_id < 0:
            raise InvalidRecord("response_id must be non-negative")
        if self.old_logprob > 0.0:
            raise InvalidRecord("old_logprob must be <= 0")

    @property
    def group_key(self) -> tuple[str, str, int]:
        return (self.env_id, self.task_id, self.trial_index)


@dataclass(frozen=True)
class PreferencePair:
    instruction: str
    accepted_id: int
    rejected_id: int
    accepted_rating: float
    rejected_rating: float
    source: tuple[str, str, int] = field(default=("", "", 0), compare=False)

    def __post_init__(self):
        if not self.accepted_rating > self.rejected_rating:
            raise ValueError("accepted_rating must be strictly greater than rejected_rating")


def compute_rating(record_before: Trajectory, record_after: Trajectory) -> float:
    """Rating of the reflection that sat between two consecutive trials.

    It is the change in episode return from one trial to the next.
    """
    if record_before.key != record_after.key:
        raise IdentityMismatch(f"{record_before.key} vs {record_after.key}")
    if record_after.trial_index != record_before.trial_index + 1:
        raise TrialOrder(
            f"expected trial {record_before.trial_index + 1}, got {record_after.trial_index}"
        )
    return record_after.episode_return - record_before.episode_return
