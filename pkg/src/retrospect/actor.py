"""The frozen actor: prompt assembly, a scripted stand-in, and a remote LLM client.

Scripted behaviour table (checked in this order on every step):

=========================================  ===============================
condition                                  plan played
=========================================  ===============================
task.failure_mode is ``none``              gold actions
latest reflection matches a harmful cue    first gold action, repeated
any reflection matches the corrective cue  gold actions
   for task.failure_mode
otherwise                                  task.failure_actions
=========================================  ===============================

A plan shorter than the episode repeats its final action, which is how the
loop failure plays out.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from configparser import ConfigParser
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Protocol, Sequence

from .core import FailureMode, RetrospectError, Step
from .retro.templates import TemplateLibrary, default_library

if TYPE_CHECKING:
    from .envs.base import TaskSpec

DEFAULT_BUDGET = 4096
PREAMBLE = (
    "Solve the task by interleaving actions and observations. "
    "Reply with exactly one action in the form Verb[argument]."
)
REFLECTION_MARKER = "Reflection:"


class BudgetExceeded(RetrospectError):
    pass


class RemoteUnavailable(RetrospectError):
    pass


class EmptyAction(RetrospectError):
    pass


@dataclass(frozen=True)
class ActorPrompt:
    goal_text: str
    short_term: str
    long_term: tuple[str, ...]
    rendered: str
    step_index: int = 0
    elided: int = 0


class ActorPolicy(Protocol):
    def __call__(self, prompt: ActorPrompt, task: TaskSpec) -> str: ...


def _step_lines(step: Step) -> str:
    obs = " ".join(step.state_text.split())
    t = step.timestep
    return f"Observation {t}: {obs}\nAction {t}: {step.action_text}\nReward {t}: {step.reward:g}"


def assemble_prompt(
    goal: str,
    history: Sequence[Step],
    reflections: Sequence[str],
    budget: int = DEFAULT_BUDGET,
    observation: str = "",
) -> ActorPrompt:
    """Render the actor prompt; oldest history steps are dropped first when over budget."""
    reflections = tuple(reflections)
    if budget <= len(goal) + sum(len(r) for r in reflections):
        raise BudgetExceeded(f"budget {budget} cannot hold the goal and {len(reflections)} reflections")

    head = [PREAMBLE, f"Goal: {goal}"]
    head += [f"{REFLECTION_MARKER} {' '.join(r.split())}" for r in reflections]
    tail = [f"Observation: {' '.join(observation.split())}"] if observation else []
    fixed = "\n".join(head + tail)
    if len(fixed) > budget:
        raise BudgetExceeded(f"goal and reflections need {len(fixed)} characters, budget is {budget}")

    blocks = [_step_lines(s) for s in history]
    kept: list[str] = []
    elided = len(blocks)
    if blocks:
        # newest first, until the next block (plus header and elision marker) would not fit
        used = len(fixed) + len("\nHistory:")
        for block in reversed(blocks):
            marker = len(f"\n[{elided - 1} earlier steps elided]") if elided - 1 else 0
            if used + 1 + len(block) + marker > budget:
                break
            kept.insert(0, block)
            used += 1 + len(block)
            elided -= 1
        if not kept and used + len(f"\n[{elided} earlier steps elided]") > budget:
            blocks = []
    history_lines: list[str] = []
    if blocks:
        history_lines.append("History:")
        if elided:
            history_lines.append(f"[{elided} earlier steps elided]")
        history_lines += kept
    short_term = "\n".join(history_lines[1:]) if history_lines else ""
    rendered = "\n".join(head + history_lines + tail)
    return ActorPrompt(goal, short_term, reflections, rendered, step_index=len(history), elided=elided)


def effective_mode(reflections: Sequence[str], task: TaskSpec, library: TemplateLibrary) -> FailureMode:
    """Which behaviour the scripted actor exhibits given its long-term memory."""
    if task.failure_mode is FailureMode.NONE:
        return FailureMode.NONE
    if reflections:
        harmful = library.harmful()
        if any(t.cue in reflections[-1] for t in harmful):
            return FailureMode.LOOP_REPEAT
    cue = library.corrective_for(task.failure_mode).cue
    if any(cue in r for r in reflections):
        return FailureMode.NONE
    return task.failure_mode


def scripted_act(prompt: ActorPrompt, task: TaskSpec, library: TemplateLibrary | None = None) -> str:
    mode = effective_mode(prompt.long_term, task, library or default_library())
    if mode is FailureMode.NONE:
        plan = task.gold_actions
    elif mode is task.failure_mode:
        plan = task.failure_actions
    else:
        plan = task.gold_actions[:1]
    return plan[min(prompt.step_index, len(plan) - 1)]


@dataclass(frozen=True)
class ScriptedActor:
    library: TemplateLibrary = field(default_factory=default_library)

    def __call__(self, prompt: ActorPrompt, task: TaskSpec) -> str:
        return scripted_act(prompt, task, self.library)


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    model: str = "gpt-3.5-turbo"
    api_key: str | None = None
    max_tokens: int = 64
    timeout: float = 30.0

    @classmethod
    def from_env(cls) -> "RemoteConfig":
        endpoint = os.environ.get("RETROSPECT_ENDPOINT")
        if not endpoint:
            raise RemoteUnavailable("RETROSPECT_ENDPOINT is not set")
        return cls(
            endpoint=endpoint,
            model=os.environ.get("RETROSPECT_MODEL", cls.model),
            api_key=os.environ.get("RETROSPECT_API_KEY"),
        )

    @classmethod
    def from_file(cls, path: str) -> "RemoteConfig":
        parser = ConfigParser()
        parser.read(path)
        section = parser["remote"]
        return cls(
            endpoint=section["endpoint"],
            model=section.get("model", cls.model),
            api_key=section.get("api_key") or os.environ.get("RETROSPECT_API_KEY"),
            max_tokens=section.getint("max_tokens", cls.max_tokens),
            timeout=section.getfloat("timeout", cls.timeout),
        )


def build_request(prompt: ActorPrompt, config: RemoteConfig) -> dict:
    return {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt.rendered}],
        "temperature": 0,
        "top_p": 1,
        "max_tokens": config.max_tokens,
    }


def remote_act(prompt: ActorPrompt, config: RemoteConfig) -> str:
    """Ask a chat-completion endpoint for the next action (first non-empty line)."""
    body = json.dumps(build_request(prompt, config)).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    request = urllib.request.Request(config.endpoint, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=config.timeout) as response:
            payload = json.loads(response.read().decode("utf-8"))
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise RemoteUnavailable(f"{config.endpoint}: {exc}") from exc
    try:
        content = payload["choices"][0]["message"]["content"] or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise RemoteUnavailable(f"unexpected response shape from {config.endpoint}") from exc
    for line in content.splitlines():
        if line.strip():
            return line.strip()
    raise EmptyAction("completion contained no action")


@dataclass(frozen=True)
class RemoteActor:
    config: RemoteConfig

    def __call__(self, prompt: ActorPrompt, task: TaskSpec) -> str:
        return remote_act(prompt, self.config)
