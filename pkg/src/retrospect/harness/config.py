"""Run configuration: an INI file with one section per stage.

Every key is optional; missing keys take the library defaults. Example::

    [env]
    env_id = synthqa
    n_train = 50
    n_val = 30

    [collect]
    trials = 3
    temperature = 0.9

    [reward_model]
    lr = 0.025          ; 2.5e-5 at 7B scale
    steps = 2000

    [sft]
    epochs = 2
    lr = 0.01
    batch_size = 32

    [ppo]
    learning_rate = 0.014   ; 1.4e-5 at 7B scale
    ppo_epochs = 4
    clip_epsilon = 0.2
    beta_kl = 0.2
    batch_size = 64
    max_steps = 200
    temperature = 1.0

    [evaluate]
    retries = 4
    best_of_n = 4
    temperature = 0.9
    jobs = 1
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..rlhf.pipeline import PipelineConfig
from ..rlhf.ppo import PPOConfig
from ..sampler import DEFAULT_N


@dataclass(frozen=True)
class EnvConfig:
    env_id: str = "synthqa"
    n_train: int = 50
    n_val: int = 30
    env_seed: int | None = None  # defaults to the run seed


@dataclass(frozen=True)
class EvalConfig:
    retries: int = 4
    best_of_n: int = DEFAULT_N
    temperature: float = 0.9
    jobs: int = 1


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    evaluate: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return asdict(self)


# (section, ini key) -> (target, attribute)
_KEYMAP = {
    ("env", "env_id"): ("env", "env_id"),
    ("env", "n_train"): ("env", "n_train"),
    ("env", "n_val"): ("env", "n_val"),
    ("env", "seed"): ("env", "env_seed"),
    ("env", "max_steps"): ("pipeline", "max_steps"),
    ("collect", "trials"): ("pipeline", "collect_trials"),
    ("collect", "temperature"): ("pipeline", "collect_temperature"),
    ("reward_model", "lr"): ("pipeline", "rm_lr"),
    ("reward_model", "steps"): ("pipeline", "rm_steps"),
    ("sft", "epochs"): ("pipeline", "sft_epochs"),
    ("sft", "lr"): ("pipeline", "sft_lr"),
    ("sft", "batch_size"): ("pipeline", "sft_batch_size"),
    ("ppo", "temperature"): ("pipeline", "ppo_temperature"),
    **{("ppo", f.name): ("ppo", f.name) for f in fields(PPOConfig)},
    **{("evaluate", f.name): ("evaluate", f.name) for f in fields(EvalConfig)},
}

_TYPES = {
    **{("env", f.name): f.type for f in fields(EnvConfig)},
    **{("pipeline", f.name): f.type for f in fields(PipelineConfig)},
    **{("ppo", f.name): f.type for f in fields(PPOConfig)},
    **{("evaluate", f.name): f.type for f in fields(EvalConfig)},
}


def _coerce(kind: str, raw: str):
    kind = str(kind)
    if raw.strip().lower() in ("", "none") and "None" in kind:
        return None
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw.strip()


def load_config(path: str | Path | None = None) -> RunConfig:
    if path is None:
        return RunConfig()
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not parser.read(path, encoding="utf-8"):
        raise FileNotFoundError(f"config file {path} not found")
    values: dict[str, dict] = {"env": {}, "pipeline": {}, "ppo": {}, "evaluate": {}}
    for section in parser.sections():
        for key, raw in parser.items(section):
            target = _KEYMAP.get((section, key))
            if target is None:
                raise ValueError(f"unknown config key [{section}] {key}")
            values[target[0]][target[1]] = _coerce(_TYPES[target], raw)
    return RunConfig(
        env=EnvConfig(**values["env"]),
        pipeline=PipelineConfig(ppo=PPOConfig(**values["ppo"]), **values["pipeline"]),
        evaluate=EvalConfig(**values["evaluate"]),
    )


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(payload) -> str:
    """sha256 of the canonical JSON form; any field change changes the hash."""
    if hasattr(payload, "to_dict"):
        payload = payload.to_dict()
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
