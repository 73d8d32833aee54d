"""Reflection prompts and the failure-signal features read off them.

A reflection prompt holds the full (observation, action, reward) history of a
failed trial and its episode return. ``extract_features`` works from the
rendered text alone, so records loaded from the replay buffer give the same
features as freshly built prompts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..core import RetrospectError, Trajectory
from ..envs.base import parse_action
from ..rewards import normalize_tokens

INSTRUCTION = (
    "You attempted the task below and did not succeed. Review the trajectory, "
    "diagnose the most likely cause of failure, and write a short plan that avoids it."
)

# Failure signals only. A constant, return-level or per-environment feature
# would be shared by every failure mode, and under phi (x) onehot(k) it lets
# the template rated most often overall outvote the evidence for a rare mode.
FEATURE_NAMES = (
    "finished_early",
    "dead_end",
    "repeated_action",
    "skipped_inspection",
    "answer_mismatch",
    "no_terminal_action",
    "invalid_action",
)
N_FEATURES = len(FEATURE_NAMES)

_LINE_RE = re.compile(r"^(Observation|Action|Reward) (\d+): ?(.*)$")


class NotAFailure(RetrospectError):
    pass


@dataclass(frozen=True)
class ReflectionPrompt:
    trajectory_render: str
    return_text: str
    instruction_text: str
    rendered: str


def _one_line(text: str) -> str:
    return " ".join(text.split())


def build_reflection_prompt(traj: Trajectory) -> ReflectionPrompt:
    if traj.success:
        raise NotAFailure(f"{traj.env_id}/{traj.task_id} trial {traj.trial_index} succeeded")
    lines = []
    for s in traj.steps:
        lines.append(f"Observation {s.timestep}: {_one_line(s.state_text)}")
        lines.append(f"Action {s.timestep}: {_one_line(s.action_text)}")
        lines.append(f"Reward {s.timestep}: {s.reward:g}")
    lines.append(f"Final observation: {_one_line(traj.final_observation)}")
    trajectory_render = "\n".join(lines)
    return_text = f"Episode return: {traj.episode_return:.4f}"
    rendered = "\n".join([f"Environment: {traj.env_id}", INSTRUCTION, trajectory_render, return_text])
    return ReflectionPrompt(trajectory_render, return_text, INSTRUCTION, rendered)


@dataclass(frozen=True)
class ParsedPrompt:
    env_id: str
    observations: tuple[str, ...]
    actions: tuple[str, ...]
    final_observation: str
    episode_return: float


def parse_prompt(text: str) -> ParsedPrompt:
    env_id = ""
    observations: list[str] = []
    actions: list[str] = []
    final = ""
    ret = 0.0
    for line in text.splitlines():
        if line.startswith("Environment: "):
            env_id = line[len("Environment: "):].strip()
        elif line.startswith("Final observation:"):
            final = line[len("Final observation:"):].strip()
        elif line.startswith("Episode return:"):
            ret = float(line[len("Episode return:"):])
        else:
            m = _LINE_RE.match(line)
            if m and m.group(1) == "Observation":
                observations.append(m.group(3))
            elif m and m.group(1) == "Action":
                actions.append(m.group(3))
    return ParsedPrompt(env_id, tuple(observations), tuple(actions), final, ret)


def _verbs(actions):
    out = []
    for a in actions:
        parsed = parse_action(a)
        out.append(parsed if parsed else ("", a))
    return out


def _signals(p: ParsedPrompt) -> dict[str, bool]:
    verbs = _verbs(p.actions)
    names = [v for v, _ in verbs]
    all_obs = list(p.observations) + [p.final_observation]
    goal_obs = p.observations[0].lower() if p.observations else ""
    sig = dict.fromkeys(FEATURE_NAMES, False)

    if p.env_id == "synthshop":
        terminal = any(v == "Choose" and arg.lower() == "buy" for v, arg in verbs)
        selected = [m.group(1) for o in all_obs for m in re.finditer(r"You selected option: (\w+)\.", o)]
        categories = [m.group(1) for o in all_obs for m in re.finditer(r"Category: ([a-z ]+)\.", o)]
        sig["finished_early"] = terminal and not selected
        sig["dead_end"] = any(c not in goal_obs for c in categories)
        sig["answer_mismatch"] = any(opt not in normalize_tokens(goal_obs) for opt in selected)
    elif p.env_id == "synthhouse":
        terminal = "Finish" in names or any("Task completed" in o for o in all_obs)
        sig["finished_early"] = "Finish" in names and "Put" not in names
        sig["dead_end"] = any("Nothing happens" in o for o in all_obs)
        sig["skipped_inspection"] = any(re.search(r"The \w+ is closed", o) for o in all_obs)
    else:
        terminal = "Finish" in names
        if terminal:
            before = names[: names.index("Finish")]
            answer = verbs[names.index("Finish")][1]
            sig["finished_early"] = before.count("Search") < 2
            sig["skipped_inspection"] = before.count("Search") >= 2 and "Lookup" not in before
            sig["answer_mismatch"] = " and " in answer
        sig["dead_end"] = any("No more results" in o for o in all_obs)

    sig["repeated_action"] = any(a == b for a, b in zip(p.actions, p.actions[1:]))
    sig["no_terminal_action"] = not terminal
    sig["invalid_action"] = any("Invalid action" in o for o in all_obs)
    return sig


@lru_cache(maxsize=65536)
def _features_cached(text: str) -> tuple[float, ...]:
    sig = _signals(parse_prompt(text))
    return tuple(1.0 if sig[name] else 0.0 for name in FEATURE_NAMES)


def extract_features(prompt: ReflectionPrompt | str) -> np.ndarray:
    """Indicator vector of failure signals, length ``N_FEATURES``."""
    text = prompt.rendered if isinstance(prompt, ReflectionPrompt) else prompt
    return np.array(_features_cached(text), dtype=np.float64)


def template_slots(prompt: ReflectionPrompt | str) -> dict[str, str]:
    text = prompt.rendered if isinstance(prompt, ReflectionPrompt) else prompt
    actions = parse_prompt(text).actions or ("(no action)",)
    return {
        "first_action": actions[0],
        "second_action": actions[1] if len(actions) > 1 else actions[0],
        "last_action": actions[-1],
        "action_list": ", ".join(actions),
    }
