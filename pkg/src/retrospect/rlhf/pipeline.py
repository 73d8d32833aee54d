"""Offline collection, reward modelling, warm start and PPO, end to end."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..actor import ActorPolicy, ScriptedActor
from ..buffer import (
    EmptyBuffer,
    PreferenceStats,
    ReplayBuffer,
    build_preferences,
    group_records,
    sample_batch,
)
from ..core import ReflectionRecord, RetrospectError, compute_rating
from ..envs import Environment, TaskSpec, rollout
from ..retro.policy import (
    RetroPolicy,
    features,
    logprob,
    sample_response,
    sample_with,
    save_policy,
)
from ..retro.prompt import build_reflection_prompt
from ..seeding import derive_seed, rng
from .ppo import PPOConfig, PPODiagnostics, Sample, ppo_step
from .reward_model import (
    DEFAULT_RM_LR,
    DEFAULT_RM_STEPS,
    RewardModel,
    fit_reward_model,
    save_reward_model,
)
from .sft import DEFAULT_SFT_BATCH, DEFAULT_SFT_EPOCHS, DEFAULT_SFT_LR, sft_warm_start

log = logging.getLogger(__name__)

BRANCHES = 2


@dataclass(frozen=True)
class PipelineConfig:
    collect_trials: int = 3
    collect_temperature: float = 0.9
    rm_lr: float = DEFAULT_RM_LR
    rm_steps: int = DEFAULT_RM_STEPS
    sft_epochs: int = DEFAULT_SFT_EPOCHS
    sft_lr: float = DEFAULT_SFT_LR
    sft_batch_size: int = DEFAULT_SFT_BATCH
    ppo: PPOConfig = field(default_factory=PPOConfig)
    ppo_temperature: float = 1.0
    max_steps: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        payload = dict(payload)
        if isinstance(payload.get("ppo"), dict):
            payload["ppo"] = PPOConfig(**payload["ppo"])
        return cls(**payload)


@contextmanager
def stage(name: str):
    """Tag any library error raised inside with the pipeline stage it came from."""
    try:
        yield
    except RetrospectError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


def _collect_task(env: Environment, task: TaskSpec, policy: RetroPolicy, actor: ActorPolicy,
                  cfg: PipelineConfig, seed: int) -> list[ReflectionRecord]:
    records: list[ReflectionRecord] = []
    memory: list[str] = []
    traj = rollout(env, task, actor, memory, cfg.max_steps, seed=seed, trial_index=1)
    for i in range(1, cfg.collect_trials + 1):
        if traj.success:
            break
        prompt = build_reflection_prompt(traj)
        phi = features(prompt)
        outcomes = []
        for b in range(BRANCHES):
            draw_seed = derive_seed(seed, "collect", task.task_id, i, b)
            k, text, _ = sample_response(policy, prompt, cfg.collect_temperature, draw_seed)
            nxt = rollout(env, task, actor, memory + [text], cfg.max_steps, seed=seed, trial_index=i + 1)
            records.append(ReflectionRecord(
                env_id=task.env_id,
                task_id=task.task_id,
                trial_index=i,
                instruction=prompt.rendered,
                response_id=k,
                response_text=text,
                return_before=traj.episode_return,
                return_after=nxt.episode_return,
                rating=compute_rating(traj, nxt),
                old_logprob=logprob(policy.theta, phi, k),
                sample_temperature=cfg.collect_temperature,
            ))
            outcomes.append((text, nxt))
        # the first branch carries on as the task's actual history
        memory.append(outcomes[0][0])
        traj = outcomes[0][1]
    return records


def collect(env: Environment, tasks: Sequence[TaskSpec], policy: RetroPolicy, cfg: PipelineConfig,
            seed: int, actor: ActorPolicy | None = None, jobs: int = 1) -> list[ReflectionRecord]:
    """Step 1: roll out, sample two reflections per failed trial, rate both by the next trial."""
    actor = actor or ScriptedActor(policy.library)
    if jobs <= 1:
        per_task = [_collect_task(env, t, policy, actor, cfg, seed) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_task = list(pool.map(lambda t: _collect_task(env, t, policy, actor, cfg, seed), tasks))
    return [r for group in per_task for r in group]


def train_reward_model(records: Sequence[ReflectionRecord], cfg: PipelineConfig) -> tuple[RewardModel, dict]:
    """Step 2: preferences from rated pairs, then the pairwise reward model."""
    if not records:
        raise EmptyBuffer("replay buffer is empty; nothing failed during collection")
    stats = PreferenceStats()
    pairs = build_preferences(group_records(records), stats)
    if not pairs:
        raise EmptyBuffer(f"all {stats.groups} reflection pairs were ties")
    rm = fit_reward_model(pairs, lr=cfg.rm_lr, steps=cfg.rm_steps)
    metrics = {"groups": stats.groups, "pairs": stats.pairs, "ties": stats.ties,
               "rm_train_accuracy": rm.train_accuracy, "rm_final_loss": rm.final_loss}
    return rm, metrics


def ppo_batch(policy: RetroPolicy, records: Sequence[ReflectionRecord], cfg: PipelineConfig,
              seed: int, step: int) -> list[Sample]:
    """Prompts come from the buffer; responses are drawn fresh from the current policy."""
    prompts = sample_batch(records, None, cfg.ppo.batch_size, derive_seed(seed, "ppo-batch", step))
    gen = rng(seed, "ppo-sample", step)
    batch = []
    for r in prompts:
        k, _, _ = sample_with(policy, r.instruction, cfg.ppo_temperature, gen)
        batch.append(Sample(r.instruction, k, logprob(policy.theta, features(r.instruction), k)))
    return batch


def train_policy(records: Sequence[ReflectionRecord], rm: RewardModel, cfg: PipelineConfig, seed: int,
                 policy: RetroPolicy | None = None) -> tuple[RetroPolicy, dict]:
    """SFT warm start on positive-rating records, then the PPO loop."""
    policy = policy or RetroPolicy.uniform()
    if not records:
        raise EmptyBuffer("replay buffer is empty")
    positives = [r for r in records if r.rating > 0]
    if positives:
        policy = sft_warm_start(policy, positives, cfg.sft_epochs, cfg.sft_lr, cfg.sft_batch_size)
    diag: PPODiagnostics | None = None
    for step in range(cfg.ppo.max_steps):
        policy, diag = ppo_step(policy, rm, ppo_batch(policy, records, cfg, seed, step), cfg.ppo)
        if step % 50 == 0:
            log.debug("ppo step %d: %s", step, diag)
    metrics = {"sft_records": len(positives), "ppo_steps": cfg.ppo.max_steps}
    if diag is not None:
        metrics.update({f"ppo_{k}": v for k, v in asdict(diag).items()})
    return policy, metrics


@dataclass(frozen=True, eq=False)
class PipelineResult:
    policy: RetroPolicy
    reward_model: RewardModel
    records: list[ReflectionRecord]
    manifest: dict


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def run_pipeline(env: Environment, train_tasks: Sequence[TaskSpec], cfg: PipelineConfig | None = None,
                 seed: int = 0, out_dir: str | Path | None = None, jobs: int = 1,
                 actor: ActorPolicy | None = None) -> PipelineResult:
    """Collect, fit the reward model, warm start and fine-tune; optionally persist everything to ``out_dir``."""
    cfg = cfg or PipelineConfig()
    initial = RetroPolicy.uniform()
    with stage("collect"):
        records = collect(env, train_tasks, initial, cfg, seed, actor=actor, jobs=jobs)
    with stage("reward_model"):
        rm, rm_metrics = train_reward_model(records, cfg)
    with stage("policy"):
        policy, policy_metrics = train_policy(records, rm, cfg, seed, initial)

    manifest = {
        "seed": seed,
        "env_id": env.env_id,
        "env_seed": env.seed,
        "train_tasks": [t.task_id for t in train_tasks],
        "config": cfg.to_dict(),
        "metrics": {"records": len(records), **rm_metrics, **policy_metrics},
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        buf_path = out / "buffer.jsonl"
        if buf_path.exists():
            buf_path.unlink()
        with stage("persist"):
            ReplayBuffer(buf_path).extend(records)
            save_reward_model(rm, out / "reward_model.ckpt")
            save_policy(policy, out / "policy.ckpt")
            _write_json(out / "manifest.json", manifest)
    return PipelineResult(policy, rm, records, manifest)


def corrective_probability(policy: RetroPolicy, prompts: Sequence[str], modes: Sequence) -> float:
    """Mean probability the policy assigns to the corrective template of each prompt's failure mode."""
    vals = []
    for prompt, mode in zip(prompts, modes):
        k = policy.library.corrective_for(mode).id
        vals.append(float(np.exp(logprob(policy.theta, features(prompt), k))))
    return float(np.mean(vals))
