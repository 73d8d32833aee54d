from __future__ import annotations

from typing import Sequence

from ..actor import DEFAULT_BUDGET, ActorPolicy, assemble_prompt
from ..core import RetrospectError, Step, Trajectory
from .base import Environment, TaskSpec


class RolloutAborted(RetrospectError):
    """The actor failed mid-episode; ``partial`` holds the steps taken so far."""

    def __init__(self, message: str, partial: Trajectory):
        super().__init__(message)
        self.partial = partial


def rollout(
    env: Environment,
    task: TaskSpec,
    actor: ActorPolicy,
    reflections: Sequence[str] = (),
    max_steps: int | None = None,
    *,
    seed: int = 0,
    trial_index: int = 1,
    budget: int = DEFAULT_BUDGET,
) -> Trajectory:
    """Play one trial of ``task``: actor and environment alternate until terminal or ``max_steps``."""
    max_steps = env.default_max_steps if max_steps is None else max_steps
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    reflections = tuple(reflections)
    state = env.reset(task, seed)
    steps: list[Step] = []

    def finish() -> Trajectory:
        ret = env.episode_return(state)
        return Trajectory(
            env_id=task.env_id,
            task_id=task.task_id,
            trial_index=trial_index,
            steps=tuple(steps),
            episode_return=ret,
            success=ret >= env.success_threshold,
            final_observation=state.observation_text,
        )

    for t in range(1, max_steps + 1):
        prompt = assemble_prompt(task.goal_text, steps, reflections, budget, observation=state.observation_text)
        try:
            action = actor(prompt, task)
            if not action or not action.strip():
                raise ValueError("actor returned an empty action")
        except Exception as exc:
            raise RolloutAborted(f"actor failed at step {t} of {task.task_id}: {exc}", finish()) from exc
        next_state, reward = env.step(state, action)
        steps.append(Step(t, state.observation_text, action, reward))
        state = next_state
        if state.terminal:
            break
    return finish()
