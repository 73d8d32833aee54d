"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also repeated in the terminal summary.
"""

import random
import time
from contextlib import contextmanager

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from test_core import traj
from test_rewards import VOCAB, oracle_f1, oracle_shop, random_shop_case
from test_rlhf import PROMPTS, fd_grad, on_policy, random_batch, rel_err

from retrospect.buffer import ReplayBuffer
from retrospect.cli import main
from retrospect.core import compute_rating
from retrospect.envs import make_env
from retrospect.harness import ReflectionAgent, compare
from retrospect.retro import N_FEATURES, RetroPolicy, grad_logprob
from retrospect.retro.policy import features, kl_to_reference, logprob
from retrospect.rewards import ShopChoice, ShopTarget, f1_reward, shop_reward
from retrospect.rlhf import (
    PipelineConfig,
    PPOConfig,
    RewardModel,
    advantages,
    pairwise_loss,
    pairwise_loss_grad,
    ppo_step,
    run_pipeline,
    surrogate,
    surrogate_grad,
    train_policy,
)
from retrospect.sampler import best_of_n_draws

K = 8


def report(line):
    print(line)
    ACCEPTANCE_LINES.append(line)


@contextmanager
def criterion(number, text):
    start = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException:
        report(f"[FAIL] C{number:<2} {text}")
        raise
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    report(f"[PASS] C{number:<2} {text} ({extra + ', ' if extra else ''}{time.perf_counter() - start:.2f}s)")


def test_c01_headline_numbers_not_reproducible():
    report("[N/A ] C1  headline success rates need hosted LLM actors and the original benchmarks; "
           "replaced by C2-C10")


def test_c02_reward_oracles():
    with criterion(2, "f1_reward and shop_reward match brute-force oracles, 200 cases each, |err| < 1e-9") as d:
        start = time.perf_counter()
        gen = random.Random(0)
        worst = 0.0
        for _ in range(200):
            a = " ".join(gen.choice(VOCAB) for _ in range(gen.randint(0, 7)))
            b = " ".join(gen.choice(VOCAB) for _ in range(gen.randint(0, 7)))
            worst = max(worst, abs(f1_reward(a, b) - oracle_f1(a, b)))
        gen = random.Random(1)
        for _ in range(200):
            case = random_shop_case(gen)
            u_att, u_opt, u_price, u_type, y_att, y_opt, y_price, y_type = case
            got = shop_reward(ShopTarget(u_att, u_opt, u_price, u_type), ShopChoice(y_att, y_opt, y_price, y_type))
            worst = max(worst, abs(got - oracle_shop(*case)))
        elapsed = time.perf_counter() - start
        d["max_err"] = f"{worst:.1e}"
        assert worst < 1e-9
        assert elapsed < 1.0


def test_c03_rating_law():
    with criterion(3, "rating = G_after - G_before and antisymmetric on 1000 random pairs, exact"):
        gen = np.random.default_rng(3)
        for a, b in gen.random((1000, 2)):
            a, b = float(a), float(b)
            forward = compute_rating(traj(a, 1), traj(b, 2))
            assert forward == b - a
            assert compute_rating(traj(b, 1), traj(a, 2)) == -forward


def test_c04_gradient_suite():
    with criterion(4, "logprob, pairwise-loss and surrogate gradients match central FD, rel err < 1e-4") as d:
        start = time.perf_counter()
        gen = np.random.default_rng(4)
        errs = {"logprob": 0.0, "pairwise": 0.0, "surrogate": 0.0}
        for _ in range(50):
            theta = gen.normal(size=(N_FEATURES, K))
            phi = random_batch(gen, 1)[0]
            y = int(gen.integers(K))
            errs["logprob"] = max(errs["logprob"], rel_err(
                grad_logprob(theta, phi, y), fd_grad(lambda t: logprob(t, phi, y), theta)))

            n = int(gen.integers(1, 12))
            phis = random_batch(gen, n)
            acc = gen.integers(K, size=n)
            rej = (acc + gen.integers(1, K, size=n)) % K
            errs["pairwise"] = max(errs["pairwise"], rel_err(
                pairwise_loss_grad(theta, phis, acc, rej), fd_grad(lambda w: pairwise_loss(w, phis, acc, rej), theta)))

            ids = gen.integers(K, size=n)
            old = np.array([logprob(theta, phis[j], ids[j]) for j in range(n)]) + gen.normal(scale=0.3, size=n)
            adv = gen.normal(size=n)
            fd = fd_grad(lambda t: surrogate(t, phis, ids, old, adv, 0.2), theta)
            if np.linalg.norm(fd) > 1e-12:
                errs["surrogate"] = max(errs["surrogate"], rel_err(surrogate_grad(theta, phis, ids, old, adv, 0.2), fd))
        d.update({k: f"{v:.1e}" for k, v in errs.items()})
        assert max(errs.values()) < 1e-4
        assert time.perf_counter() - start < 10.0


def test_c05_kl_anchor():
    with criterion(5, "KL(theta=ref) = 0 exactly; final KL non-increasing over beta in {0, 0.2, 1.0}") as d:
        start = time.perf_counter()
        gen = np.random.default_rng(5)
        for _ in range(20):
            policy = RetroPolicy.from_theta(gen.normal(size=(N_FEATURES, K)))
            assert all(kl_to_reference(policy, x) == 0.0 for x in PROMPTS.values())
        env = make_env("synthqa", seed=1)
        res = run_pipeline(env, env.split("train"), seed=1)
        prompts = sorted({r.instruction for r in res.records})
        finals = []
        for beta in (0.0, 0.2, 1.0):
            cfg = PipelineConfig(ppo=PPOConfig(beta_kl=beta))
            policy, _ = train_policy(res.records, res.reward_model, cfg, seed=1)
            finals.append(float(np.mean([kl_to_reference(policy, x) for x in prompts])))
        d["kl"] = "/".join(f"{v:.3f}" for v in finals)
        assert finals[0] >= finals[1] >= finals[2]
        assert time.perf_counter() - start < 30.0


def test_c06_ppo_sanity():
    with criterion(6, "rho = 1 update equals vanilla policy gradient (< 1e-10); zero advantage leaves theta") as d:
        gen = np.random.default_rng(6)
        worst = 0.0
        for trial in range(20):
            theta = gen.normal(scale=0.5, size=(N_FEATURES, K))
            policy = RetroPolicy(theta, np.zeros_like(theta))
            rm = RewardModel(gen.normal(size=(N_FEATURES, K)))
            batch = on_policy(policy, list(PROMPTS.values()) * 4, trial)
            cfg = PPOConfig(ppo_epochs=1, learning_rate=0.05)
            new, _ = ppo_step(policy, rm, batch, cfg)
            phis = np.stack([features(s.instruction) for s in batch])
            ids = np.array([s.response_id for s in batch])
            adv, _ = advantages(policy, rm, phis, ids, cfg.beta_kl)
            pg = sum(a * grad_logprob(theta, phi, k) for a, phi, k in zip(adv, phis, ids)) / len(batch)
            worst = max(worst, float(np.max(np.abs(new.theta - theta - cfg.learning_rate * pg))))
        d["max_diff"] = f"{worst:.1e}"
        assert worst < 1e-10
        uniform = RetroPolicy.uniform()
        same, _ = ppo_step(uniform, RewardModel.zeros(), on_policy(uniform, list(PROMPTS.values()), 0), PPOConfig())
        assert np.array_equal(same.theta, uniform.theta)


def test_c07_end_to_end_learning():
    with criterion(7, "synthqa 50/30, seeds 1-5: reinforced beats frozen at trial 4 by >= 10pp, curves monotone") as d:
        start = time.perf_counter()
        gaps = []
        for seed in range(1, 6):
            env = make_env("synthqa", seed=seed, n_train=50, n_val=30)
            res = run_pipeline(env, env.split("train"), seed=seed)
            agents = [
                ReflectionAgent("no_reflection", "none"),
                ReflectionAgent("frozen_retro", "sample", RetroPolicy.uniform(), temperature=0.9),
                ReflectionAgent("reinforced_retro", "best_of_n", res.policy, res.reward_model, n=4, temperature=0.9),
            ]
            curves = {r.agent: r.success_rates for r in compare(agents, env, env.split("val"), 4, seed).reports}
            for rates in curves.values():
                assert all(b >= a for a, b in zip(rates, rates[1:]))
            gaps.append(curves["reinforced_retro"][4] - curves["frozen_retro"][4])
        elapsed = time.perf_counter() - start
        d["gaps_pp"] = "/".join(f"{100 * g:+.0f}" for g in gaps)
        d["mean_pp"] = f"{100 * np.mean(gaps):.1f}"
        assert np.mean(gaps) >= 0.10
        assert elapsed < 300.0


def test_c08_buffer_roundtrip_and_concurrency(tmp_path):
    from concurrent.futures import ThreadPoolExecutor

    from test_buffer import bits, make_records
    with criterion(8, "10,000-record buffer round-trip bit-exact; 8 writers x 125 appends give 1,000 records"):
        records = make_records(10_000)
        buf = ReplayBuffer(tmp_path / "big.jsonl")
        buf.extend(records)
        back = buf.read_all()
        assert back == records
        for a, b in zip(back, records):
            for name in ("return_before", "return_after", "rating", "old_logprob", "sample_temperature"):
                assert bits(getattr(a, name)) == bits(getattr(b, name))
        shared = ReplayBuffer(tmp_path / "shared.jsonl")
        batches = [make_records(125, seed=w, prefix=f"w{w}-") for w in range(8)]
        with ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(lambda batch: [shared.append(r) for r in batch], batches))
        assert len(shared.read_all()) == 1000


def test_c09_best_of_n():
    with criterion(9, "best-of-n returns the max reward-model score over its draws on 1,000 seeds; ties stable"):
        gen = np.random.default_rng(9)
        policy = RetroPolicy.uniform().with_theta(gen.normal(size=(N_FEATURES, K)))
        rm = RewardModel(gen.normal(size=(N_FEATURES, K)))
        prompt = PROMPTS["lookup"]
        for seed in range(1000):
            best, draws = best_of_n_draws(policy, rm, prompt, n=4, temperature=0.9, seed=seed)
            assert best.score == max(d.score for d in draws)
        flat = RewardModel.zeros()
        for seed in range(100):
            best, draws = best_of_n_draws(policy, flat, prompt, n=4, seed=seed)
            assert best.response_id == min(d.response_id for d in draws)
            assert best == best_of_n_draws(policy, flat, prompt, n=4, seed=seed)[0]


def test_c10_full_determinism(tmp_path):
    with criterion(10, "collect -> train-rm -> train-ppo -> evaluate twice gives byte-identical outputs") as d:
        outputs = []
        for run in ("a", "b"):
            args = ["--seed", "5", "--workdir", str(tmp_path / run)]
            for verb in ("collect", "train-rm", "train-ppo", "evaluate"):
                assert main([verb, *args]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / run).iterdir())})
        a, b = outputs
        d["files"] = len(a)
        assert {"buffer.jsonl", "reward_model.ckpt", "policy.ckpt", "report_reinforced_retro.json"} <= set(a)
        assert a == b


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
