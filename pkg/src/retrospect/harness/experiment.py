"""Retry-loop evaluation of reflection agents and baseline comparisons.

Trial 0 runs with empty long-term memory; after each failed trial the agent
writes one reflection that is appended to memory before the next retry, for
up to ``n_retries`` retries. Curves are cumulative (a solved task stays
solved), so ``success_rates`` has ``n_retries + 1`` entries.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..actor import ActorPolicy, ScriptedActor
from ..core import RetrospectError
from ..envs import Environment, TaskSpec, rollout
from ..retro.policy import RetroPolicy, load_policy, sample_response
from ..retro.prompt import build_reflection_prompt
from ..rlhf.reward_model import RewardModel, load_reward_model
from ..sampler import DEFAULT_N, best_of_n
from ..seeding import derive_seed
from .config import config_hash

CSV_COLUMNS = ("baseline", "trial", "success_rate", "n_tasks", "seed")
KINDS = ("none", "sample", "best_of_n")


class CheckpointMissing(RetrospectError, FileNotFoundError):
    pass


class TaskFailed(RetrospectError):
    def __init__(self, task_id: str, cause: BaseException):
        super().__init__(f"evaluation of task {task_id} failed: {cause}")
        self.task_id = task_id


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(a.tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class ReflectionAgent:
    """How reflections are produced between retries.

    ``none`` never reflects, ``sample`` draws one response from ``policy``,
    ``best_of_n`` draws ``n`` and keeps the reward model's favourite.
    """

    name: str
    kind: str = "sample"
    policy: RetroPolicy | None = None
    reward_model: RewardModel | None = None
    n: int = DEFAULT_N
    temperature: float = 0.9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.kind != "none" and self.policy is None:
            raise CheckpointMissing(f"agent {self.name} needs a policy")
        if self.kind == "best_of_n" and self.reward_model is None:
            raise CheckpointMissing(f"agent {self.name} needs a reward model")

    def reflect(self, prompt, seed: int) -> str | None:
        if self.kind == "none":
            return None
        if self.kind == "sample":
            return sample_response(self.policy, prompt, self.temperature, seed)[1]
        return best_of_n(self.policy, self.reward_model, prompt, self.n, self.temperature, seed)[1]

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "n": self.n, "temperature": self.temperature}
        if self.policy is not None:
            out["policy"] = _digest(self.policy.theta, self.policy.reference_theta)
        if self.reward_model is not None:
            out["reward_model"] = _digest(self.reward_model.w)
        return out


@dataclass
class ExperimentReport:
    agent: str
    env_id: str
    seed: int
    n_retries: int
    task_ids: list[str]
    outcomes: list[list[bool]]  # [task][trial], cumulative
    returns: list[list[float]]  # [task][trial]; frozen at the solving trial's value
    config: dict
    config_hash: str
    wall_clock_s: float = field(default=0.0, compare=False)

    @property
    def n_tasks(self) -> int:
        return len(self.task_ids)

    @property
    def success_rates(self) -> list[float]:
        if not self.task_ids:
            return [0.0] * (self.n_retries + 1)
        return [sum(o[t] for o in self.outcomes) / self.n_tasks for t in range(self.n_retries + 1)]

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "agent": self.agent, "env_id": self.env_id, "seed": self.seed, "n_retries": self.n_retries,
            "task_ids": self.task_ids, "outcomes": self.outcomes, "returns": self.returns,
            "success_rates": self.success_rates, "config": self.config, "config_hash": self.config_hash,
        }
        if include_timing:
            out["wall_clock_s"] = self.wall_clock_s
        return out

    def save(self, path: str | Path, include_timing: bool = False) -> None:
        text = json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2, allow_nan=False)
        Path(path).write_text(text + "\n", encoding="utf-8")


def _evaluate_task(agent: ReflectionAgent, env: Environment, task: TaskSpec, n_retries: int, seed: int,
                   actor: ActorPolicy, max_steps: int | None) -> tuple[list[bool], list[float]]:
    memory: list[str] = []
    outcomes: list[bool] = []
    returns: list[float] = []
    traj = rollout(env, task, actor, memory, max_steps, seed=seed, trial_index=1)
    for r in range(n_retries + 1):
        outcomes.append(traj.success)
        returns.append(traj.episode_return)
        if traj.success:
            pad = n_retries - r
            return outcomes + [True] * pad, returns + [traj.episode_return] * pad
        if r == n_retries:
            break
        text = agent.reflect(build_reflection_prompt(traj), derive_seed(seed, "reflect", task.task_id, r))
        if text:
            memory.append(text)
        traj = rollout(env, task, actor, memory, max_steps, seed=seed, trial_index=r + 2)
    return outcomes, returns


def evaluate(agent: ReflectionAgent, env: Environment, tasks: Sequence[TaskSpec], n_retries: int, seed: int,
             jobs: int = 1, actor: ActorPolicy | None = None, max_steps: int | None = None) -> ExperimentReport:
    if n_retries < 1:
        raise ValueError("n_retries must be >= 1")
    actor = actor or ScriptedActor()
    start = time.perf_counter()

    def one(task):
        try:
            return _evaluate_task(agent, env, task, n_retries, seed, actor, max_steps)
        except Exception as exc:
            raise TaskFailed(task.task_id, exc) from exc

    if jobs <= 1:
        results = [one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tasks))
    config = {"agent": agent.to_dict(), "env_id": env.env_id, "env_seed": env.seed,
              "n_retries": n_retries, "max_steps": max_steps}
    return ExperimentReport(
        agent=agent.name,
        env_id=env.env_id,
        seed=seed,
        n_retries=n_retries,
        task_ids=[t.task_id for t in tasks],
        outcomes=[o for o, _ in results],
        returns=[r for _, r in results],
        config=config,
        config_hash=config_hash(config),
        wall_clock_s=time.perf_counter() - start,
    )


def standard_baselines(policy_path: str | Path | None, rm_path: str | Path | None, n: int = DEFAULT_N,
                       temperature: float = 0.9) -> list[ReflectionAgent]:
    """no_reflection, frozen_retro (uniform policy) and reinforced_retro (trained policy, best-of-n)."""
    for label, p in (("policy", policy_path), ("reward model", rm_path)):
        if p is None or not Path(p).is_file():
            raise CheckpointMissing(f"{label} checkpoint not found: {p}")
    return [
        ReflectionAgent("no_reflection", "none"),
        ReflectionAgent("frozen_retro", "sample", RetroPolicy.uniform(), temperature=temperature),
        ReflectionAgent("reinforced_retro", "best_of_n", load_policy(policy_path), load_reward_model(rm_path),
                        n=n, temperature=temperature),
    ]


@dataclass
class Comparison:
    reports: list[ExperimentReport]

    def rows(self) -> list[dict]:
        return [
            {"baseline": rep.agent, "trial": t, "success_rate": rate, "n_tasks": rep.n_tasks, "seed": rep.seed}
            for rep in self.reports
            for t, rate in enumerate(rep.success_rates)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({**row, "success_rate": repr(row["success_rate"])})
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    def table(self) -> str:
        n = max(rep.n_retries for rep in self.reports)
        width = max(len(rep.agent) for rep in self.reports)
        head = f"{'baseline':<{width}}  " + "  ".join(f"trial {t:<2}" for t in range(n + 1))
        lines = [head, "-" * len(head)]
        for rep in self.reports:
            cells = "  ".join(f"{100 * r:7.1f}%" for r in rep.success_rates)
            lines.append(f"{rep.agent:<{width}}  {cells}")
        return "\n".join(lines)


def compare(agents: Sequence[ReflectionAgent], env: Environment, tasks: Sequence[TaskSpec], n_retries: int,
            seed: int, jobs: int = 1, actor: ActorPolicy | None = None) -> Comparison:
    return Comparison([evaluate(a, env, tasks, n_retries, seed, jobs, actor) for a in agents])


def read_curves(path: str | Path) -> dict[str, list[float]]:
    """Parse a curves CSV back into {baseline: rates by trial}, averaging over seeds."""
    sums: dict[str, dict[int, list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            sums.setdefault(row["baseline"], {}).setdefault(int(row["trial"]), []).append(float(row["success_rate"]))
    return {name: [sum(pts[t]) / len(pts[t]) for t in sorted(pts)] for name, pts in sums.items()}
