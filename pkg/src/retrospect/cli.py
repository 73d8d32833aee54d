"""Command-line entry point.

Stages share a working directory::

    retrospect collect   --seed 1 --workdir runs/s1     # env.json, buffer.jsonl
    retrospect train-rm  --seed 1 --workdir runs/s1     # reward_model.ckpt
    retrospect train-ppo --seed 1 --workdir runs/s1     # policy.ckpt
    retrospect evaluate  --seed 1 --workdir runs/s1     # report_<agent>.json
    retrospect compare   --seed 1 --workdir runs/s1     # curves.csv (+ curves.png)
    retrospect export    runs/*/curves.csv --out fig.png

``pipeline`` runs all of the above in order. Each stage records its outputs
in ``manifest.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __doc__ as package_doc
from .buffer import EmptyBuffer, ReplayBuffer
from .core import RetrospectError
from .envs import load_env, make_env
from .harness.config import RunConfig, config_hash, load_config
from .harness.experiment import (
    CheckpointMissing,
    ReflectionAgent,
    compare,
    evaluate,
    read_curves,
    standard_baselines,
)
from .harness.plotting import plot_curves
from .retro.policy import RetroPolicy, load_policy, save_policy
from .rlhf.pipeline import collect, stage, train_policy, train_reward_model
from .rlhf.reward_model import load_reward_model, save_reward_model

log = logging.getLogger("retrospect")

AGENTS = ("no_reflection", "frozen_retro", "reinforced_retro")


class Workdir:
    def __init__(self, args):
        self.root = Path(args.workdir)
        if args.command != "export":
            self.root.mkdir(parents=True, exist_ok=True)
        self.buffer = Path(args.buffer) if args.buffer else self.root / "buffer.jsonl"
        self.env = self.root / "env.json"
        self.rm = self.root / "reward_model.ckpt"
        self.policy = self.root / "policy.ckpt"
        self.manifest = self.root / "manifest.json"
        self.curves = self.root / "curves.csv"

    def report(self, agent: str) -> Path:
        return self.root / f"report_{agent}.json"

    def update_manifest(self, section: str, payload: dict) -> None:
        current = json.loads(self.manifest.read_text(encoding="utf-8")) if self.manifest.exists() else {}
        current[section] = payload
        text = json.dumps(current, sort_keys=True, indent=2, allow_nan=False)
        self.manifest.write_text(text + "\n", encoding="utf-8")


def _env(args, cfg: RunConfig, wd: Workdir):
    if wd.env.exists():
        return load_env(wd.env)
    env_seed = cfg.env.env_seed if cfg.env.env_seed is not None else args.seed
    env = make_env(cfg.env.env_id, env_seed, cfg.env.n_train, cfg.env.n_val)
    env.save(wd.env)
    return env


def _stage_info(args, cfg: RunConfig) -> dict:
    return {"seed": args.seed, "config": cfg.to_dict(), "config_hash": config_hash(cfg)}


def cmd_collect(args, cfg: RunConfig, wd: Workdir) -> int:
    buf = ReplayBuffer(wd.buffer)
    if wd.buffer.exists() and wd.buffer.stat().st_size:
        if not args.overwrite:
            raise SystemExit(f"{wd.buffer} already holds records; pass --overwrite to replace it")
        wd.buffer.unlink()
    env = _env(args, cfg, wd)
    with stage("collect"):
        records = collect(env, env.split("train"), RetroPolicy.uniform(), cfg.pipeline, args.seed, jobs=args.jobs)
        buf.extend(records)
    wd.update_manifest("collect", {**_stage_info(args, cfg), "records": len(records),
                                    "buffer_sha256": hashlib.sha256(wd.buffer.read_bytes()).hexdigest()})
    print(f"collected {len(records)} reflection records -> {wd.buffer}")
    return 0


def _records(wd: Workdir):
    if not wd.buffer.exists():
        raise CheckpointMissing(f"{wd.buffer} not found; run `retrospect collect` first")
    records = ReplayBuffer(wd.buffer).read_all()
    if not records:
        raise EmptyBuffer(f"{wd.buffer} holds no records; every training task succeeded at trial 1")
    return records


def cmd_train_rm(args, cfg: RunConfig, wd: Workdir) -> int:
    with stage("reward_model"):
        rm, metrics = train_reward_model(_records(wd), cfg.pipeline)
    save_reward_model(rm, wd.rm)
    wd.update_manifest("train_rm", {**_stage_info(args, cfg), **metrics})
    print(f"reward model: {metrics['pairs']} pairs, {metrics['ties']} ties, "
          f"train accuracy {metrics['rm_train_accuracy']:.3f} -> {wd.rm}")
    return 0


def cmd_train_ppo(args, cfg: RunConfig, wd: Workdir) -> int:
    if not wd.rm.exists():
        raise CheckpointMissing(f"{wd.rm} not found; run `retrospect train-rm` first")
    with stage("policy"):
        policy, metrics = train_policy(_records(wd), load_reward_model(wd.rm), cfg.pipeline, args.seed)
    save_policy(policy, wd.policy)
    wd.update_manifest("train_ppo", {**_stage_info(args, cfg), **metrics})
    print(f"policy: {metrics['sft_records']} SFT records, {metrics['ppo_steps']} PPO steps -> {wd.policy}")
    return 0


def _agent(name: str, cfg: RunConfig, wd: Workdir) -> ReflectionAgent:
    ev = cfg.evaluate
    if name == "no_reflection":
        return ReflectionAgent(name, "none")
    if name == "frozen_retro":
        return ReflectionAgent(name, "sample", RetroPolicy.uniform(), temperature=ev.temperature)
    for p in (wd.policy, wd.rm):
        if not p.exists():
            raise CheckpointMissing(f"{p} not found; run the training stages first")
    return ReflectionAgent(name, "best_of_n", load_policy(wd.policy), load_reward_model(wd.rm),
                           n=ev.best_of_n, temperature=ev.temperature)


def _retries(args, cfg: RunConfig) -> int:
    return args.retries if args.retries is not None else cfg.evaluate.retries


def cmd_evaluate(args, cfg: RunConfig, wd: Workdir) -> int:
    env = _env(args, cfg, wd)
    report = evaluate(_agent(args.agent, cfg, wd), env, env.split("val"), _retries(args, cfg), args.seed,
                      jobs=args.jobs, max_steps=cfg.pipeline.max_steps)
    report.save(wd.report(args.agent))
    wd.update_manifest(f"evaluate_{args.agent}", {**_stage_info(args, cfg), "report_hash": report.config_hash,
                                                  "success_rates": report.success_rates})
    rates = "  ".join(f"{100 * r:.1f}%" for r in report.success_rates)
    print(f"{args.agent}: {rates}")
    return 0


def cmd_compare(args, cfg: RunConfig, wd: Workdir) -> int:
    env = _env(args, cfg, wd)
    agents = standard_baselines(wd.policy, wd.rm, cfg.evaluate.best_of_n, cfg.evaluate.temperature)
    result = compare(agents, env, env.split("val"), _retries(args, cfg), args.seed, jobs=args.jobs)
    result.write_csv(wd.curves)
    for rep in result.reports:
        rep.save(wd.report(rep.agent))
    print(result.table())
    if not args.no_plot:
        plot_curves({r.agent: r.success_rates for r in result.reports}, wd.root / "curves.png",
                    title=f"{env.env_id}, seed {args.seed}")
    wd.update_manifest("compare", {**_stage_info(args, cfg),
                                   "success_rates": {r.agent: r.success_rates for r in result.reports}})
    return 0


def cmd_export(args, cfg: RunConfig, wd: Workdir) -> int:
    paths = [Path(p) for p in args.csv] or [wd.curves]
    missing = [p for p in paths if not p.exists()]
    if missing:
        raise CheckpointMissing(f"curves not found: {', '.join(map(str, missing))}")
    rows = []
    for p in paths:
        rows.extend(Path(p).read_text(encoding="utf-8").splitlines()[1:])
    out = Path(args.out)
    merged = out.with_suffix(".csv")
    merged.write_text("baseline,trial,success_rate,n_tasks,seed\n" + "\n".join(rows) + "\n", encoding="utf-8")
    curves = read_curves(merged)
    plot_curves(curves, out, title=args.title)
    for name, rates in curves.items():
        print(f"{name:<18}" + "  ".join(f"{100 * r:5.1f}%" for r in rates))
    print(f"wrote {out} and {merged}")
    return 0


def cmd_pipeline(args, cfg: RunConfig, wd: Workdir) -> int:
    args.overwrite = True
    for step in (cmd_collect, cmd_train_rm, cmd_train_ppo, cmd_compare):
        step(args, cfg, wd)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    common.add_argument("--config", help="INI config file; see the harness.config docstring for keys")
    common.add_argument("--buffer", help="replay buffer path (default <workdir>/buffer.jsonl)")
    common.add_argument("--workdir", default="run", help="directory for checkpoints and reports (default ./run)")
    common.add_argument("--jobs", type=int, default=None, help="parallel rollout workers")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="retrospect", description=package_doc)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", parents=[common], help="roll out training tasks and fill the replay buffer")
    p.add_argument("--overwrite", action="store_true", help="replace an existing buffer")
    p.set_defaults(func=cmd_collect)

    sub.add_parser("train-rm", parents=[common], help="fit the reward model on buffer preferences") \
        .set_defaults(func=cmd_train_rm)
    sub.add_parser("train-ppo", parents=[common], help="SFT warm start then PPO fine-tuning") \
        .set_defaults(func=cmd_train_ppo)

    p = sub.add_parser("evaluate", parents=[common], help="retry-loop evaluation of one agent on validation tasks")
    p.add_argument("--agent", choices=AGENTS, default="reinforced_retro")
    p.add_argument("--retries", type=int, help="number of retries after trial 0")
    p.set_defaults(func=cmd_evaluate)

    for name, func, text in (("compare", cmd_compare, "evaluate all three baselines and write curves.csv"),
                             ("pipeline", cmd_pipeline, "collect, train-rm, train-ppo and compare in one go")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--retries", type=int, help="number of retries after trial 0")
        p.add_argument("--no-plot", action="store_true", help="skip curves.png")
        p.set_defaults(func=func)

    p = sub.add_parser("export", parents=[common], help="merge curve CSVs (averaging seeds) and plot them")
    p.add_argument("csv", nargs="*", help="curves.csv files (default <workdir>/curves.csv)")
    p.add_argument("--out", default="curves.png", help="figure path; the merged CSV sits beside it")
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    cfg = load_config(args.config)
    if args.jobs is None:
        args.jobs = cfg.evaluate.jobs
    try:
        return args.func(args, cfg, Workdir(args))
    except RetrospectError as exc:
        where = f" [{exc.stage}]" if getattr(exc, "stage", None) else ""
        print(f"error{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
