from dataclasses import replace

import numpy as np
import pytest

from retrospect.buffer import EmptyBuffer
from retrospect.core import FailureMode, PreferencePair, ReflectionRecord
from retrospect.envs import TaskSpec, make_env
from retrospect.retro import (
    N_FEATURES,
    NumericalError,
    RetroPolicy,
    default_library,
    grad_logprob,
)
from retrospect.retro.policy import features, kl_to_reference, logprob, policy_probs
from retrospect.rlhf import (
    ContaminatedSFTSet,
    PipelineConfig,
    PPOConfig,
    RewardModel,
    Sample,
    advantages,
    collect,
    corrective_probability,
    fit_reward_model,
    pairwise_loss,
    pairwise_loss_grad,
    ppo_step,
    run_pipeline,
    sft_loss,
    sft_warm_start,
    surrogate,
    surrogate_grad,
    train_policy,
)

K = 8
# one prompt per failure signal; each text is parsed back to a one-hot-ish feature vector
PROMPTS = {
    "early": "Environment: synthqa\nAction 1: Search[A]\nAction 2: Finish[B]\nEpisode return: 0.0000",
    "loop": "Environment: synthqa\nAction 1: Search[A]\nAction 2: Search[A]\nEpisode return: 0.0000",
    "lookup": ("Environment: synthqa\nAction 1: Search[A]\nAction 2: Search[B]\nAction 3: Finish[C]\n"
               "Episode return: 0.5000"),
}


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def fd_grad(f, theta, h=1e-5):
    g = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        up, down = theta.copy(), theta.copy()
        up[idx] += h
        down[idx] -= h
        g[idx] = (f(up) - f(down)) / (2 * h)
    return g


def random_batch(gen, n):
    phis = (gen.random((n, N_FEATURES)) < 0.4).astype(float)
    phis[np.arange(n), gen.integers(N_FEATURES, size=n)] = 1.0
    return phis


def test_pairwise_gradient_fd():
    gen = np.random.default_rng(0)
    for _ in range(50):
        n = int(gen.integers(1, 12))
        phis = random_batch(gen, n)
        acc = gen.integers(K, size=n)
        rej = (acc + gen.integers(1, K, size=n)) % K
        w = gen.normal(size=(N_FEATURES, K))
        g = pairwise_loss_grad(w, phis, acc, rej)
        assert rel_err(g, fd_grad(lambda v: pairwise_loss(v, phis, acc, rej), w)) < 1e-4


def test_surrogate_gradient_fd():
    gen = np.random.default_rng(1)
    eps = 0.2
    for _ in range(50):
        n = int(gen.integers(2, 12))
        phis = random_batch(gen, n)
        ids = gen.integers(K, size=n)
        theta = gen.normal(size=(N_FEATURES, K))
        current = np.array([logprob(theta, phis[j], ids[j]) for j in range(n)])
        old = current + gen.normal(scale=0.3, size=n)
        adv = gen.normal(size=n)
        g = surrogate_grad(theta, phis, ids, old, adv, eps)
        fd = fd_grad(lambda t: surrogate(t, phis, ids, old, adv, eps), theta)
        assert rel_err(g, fd) < 1e-4 or np.linalg.norm(fd) < 1e-12


def test_sft_gradient_fd():
    from retrospect.rlhf import sft_grad
    gen = np.random.default_rng(2)
    for _ in range(20):
        phis = random_batch(gen, 6)
        ids = gen.integers(K, size=6)
        theta = gen.normal(size=(N_FEATURES, K))
        assert rel_err(sft_grad(theta, phis, ids), fd_grad(lambda t: sft_loss(t, phis, ids), theta)) < 1e-4


def pair(prompt, a, r):
    return PreferencePair(PROMPTS[prompt], a, r, 1.0, 0.0)


def test_reward_model_separable_fixture():
    pairs = [pair("early", 0, k) for k in range(1, K)] + [pair("loop", 2, k) for k in range(K) if k != 2] \
        + [pair("lookup", 3, k) for k in range(K) if k != 3]
    rm = fit_reward_model(pairs, steps=2000)
    assert rm.train_accuracy == 1.0
    assert rm.final_loss < pairwise_loss(np.zeros((N_FEATURES, K)), *_stack(pairs))


def _stack(pairs):
    from retrospect.rlhf.reward_model import _stack as stack
    return stack(pairs)


def test_reward_model_single_pair():
    rm = fit_reward_model([pair("loop", 2, 5)], steps=10)
    assert rm.score(PROMPTS["loop"], 2) - rm.score(PROMPTS["loop"], 5) > 0


def test_reward_model_empty():
    with pytest.raises(EmptyBuffer):
        fit_reward_model([])
    with pytest.raises(ValueError):
        RewardModel(np.full((N_FEATURES, K), np.inf))


def positive_record(prompt="early", rid=0, rating=1.0):
    return ReflectionRecord("synthqa", "q1", 1, PROMPTS[prompt], rid, "y", 0.0, rating, rating)


def test_sft_single_record():
    policy = RetroPolicy.uniform()
    before = policy_probs(policy, PROMPTS["early"])[0]
    after = sft_warm_start(policy, [positive_record()] * 4, epochs=1)
    assert policy_probs(after, PROMPTS["early"])[0] > before
    assert np.array_equal(after.reference_theta, policy.reference_theta)


def test_sft_errors():
    with pytest.raises(ContaminatedSFTSet):
        sft_warm_start(RetroPolicy.uniform(), [])
    with pytest.raises(ContaminatedSFTSet):
        sft_warm_start(RetroPolicy.uniform(), [positive_record(), replace(positive_record(), return_after=0.0,
                                                                          rating=0.0)])


def test_sft_loss_decreases_and_deterministic():
    records = [positive_record("early", 0), positive_record("loop", 2), positive_record("lookup", 3)] * 5
    phis = np.stack([features(r.instruction) for r in records])
    ids = np.array([r.response_id for r in records])
    policy = RetroPolicy.uniform()
    losses = [sft_loss(policy.theta, phis, ids)]
    for _ in range(5):
        policy = sft_warm_start(policy, records, epochs=1, lr=0.05)
        losses.append(sft_loss(policy.theta, phis, ids))
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    again = sft_warm_start(RetroPolicy.uniform(), records, epochs=5, lr=0.05, batch_size=32)
    assert np.array_equal(again.theta, sft_warm_start(RetroPolicy.uniform(), records, 5, 0.05, 32).theta)


def rm_favouring(t_star, scale=2.0):
    w = np.zeros((N_FEATURES, K))
    w[:, t_star] = scale
    return RewardModel(w)


def on_policy(policy, prompts, seed):
    gen = np.random.default_rng(seed)
    batch = []
    for x in prompts:
        p = policy_probs(policy, x)
        k = int(gen.choice(K, p=p))
        batch.append(Sample(x, k, logprob(policy.theta, features(x), k)))
    return batch


def test_ppo_at_ratio_one_is_policy_gradient():
    gen = np.random.default_rng(3)
    theta = gen.normal(scale=0.5, size=(N_FEATURES, K))
    policy = RetroPolicy(theta, np.zeros_like(theta))
    rm = RewardModel(gen.normal(size=(N_FEATURES, K)))
    batch = on_policy(policy, list(PROMPTS.values()) * 4, 0)
    cfg = PPOConfig(ppo_epochs=1, learning_rate=0.05, beta_kl=0.2)
    new, diag = ppo_step(policy, rm, batch, cfg)
    phis = np.stack([features(s.instruction) for s in batch])
    ids = np.array([s.response_id for s in batch])
    adv, _ = advantages(policy, rm, phis, ids, cfg.beta_kl)
    pg = sum(a * grad_logprob(theta, phi, k) for a, phi, k in zip(adv, phis, ids)) / len(batch)
    assert np.max(np.abs((new.theta - theta) - cfg.learning_rate * pg)) < 1e-10
    assert diag.mean_ratio == pytest.approx(1.0, abs=0.05)


def test_ppo_zero_advantage_is_identity():
    policy = RetroPolicy.uniform()
    batch = on_policy(policy, list(PROMPTS.values()) * 3, 1)
    new, diag = ppo_step(policy, RewardModel.zeros(), batch, PPOConfig())
    assert np.array_equal(new.theta, policy.theta)
    assert diag.mean_kl == 0.0


def test_ppo_clip_engaged():
    phi = features(PROMPTS["early"])[None, :]
    theta = np.zeros((N_FEATURES, K))
    ids = np.array([0])
    old = np.array([np.log(1 / K) - np.log(1.5)])  # ratio = 1.5
    adv = np.array([2.0])
    assert surrogate(theta, phi, ids, old, adv, 0.2) == pytest.approx(1.2 * 2.0)
    assert np.all(surrogate_grad(theta, phi, ids, old, adv, 0.2) == 0.0)
    assert np.any(surrogate_grad(theta, phi, ids, old, -adv, 0.2) != 0.0)


def test_ppo_bandit_convergence():
    t_star = 4
    policy = RetroPolicy.uniform()
    rm = rm_favouring(t_star)
    cfg = PPOConfig(beta_kl=0.0, learning_rate=0.1)
    prompts = list(PROMPTS.values()) * 8
    history = [np.mean([policy_probs(policy, x)[t_star] for x in PROMPTS.values()])]
    for step in range(100):
        policy, _ = ppo_step(policy, rm, on_policy(policy, prompts, step), cfg)
        history.append(np.mean([policy_probs(policy, x)[t_star] for x in PROMPTS.values()]))
    # sampled batches add small dips; the trend over blocks of 10 steps is monotone
    blocks = np.mean(np.reshape(history[1:], (10, 10)), axis=1)
    assert np.all(np.diff(blocks) > 0)
    assert np.min(np.diff(history)) > -0.01
    assert history[-1] > 0.9


def test_ppo_numerical_error():
    cfg = PPOConfig(learning_rate=1e308)
    w = np.zeros((N_FEATURES, K))
    w[:, 3] = 1e300
    rm = RewardModel(w)
    policy = RetroPolicy.uniform()
    with pytest.raises(NumericalError) as info:
        ppo_step(policy, rm, [Sample(PROMPTS["early"], k, np.log(1 / K)) for k in (2, 3)], cfg)
    assert info.value.diagnostics


def test_ppo_config_validation():
    with pytest.raises(ValueError):
        PPOConfig(clip_epsilon=1.0)
    with pytest.raises(ValueError):
        PPOConfig(beta_kl=-0.1)


@pytest.fixture(scope="module")
def qa_run():
    env = make_env("synthqa", seed=7)
    return env, run_pipeline(env, env.split("train"), seed=7)


def test_kl_penalty_monotone(qa_run):
    _, res = qa_run
    prompts = sorted({r.instruction for r in res.records})
    finals = []
    for beta in (0.0, 0.2, 1.0):
        cfg = PipelineConfig(ppo=PPOConfig(beta_kl=beta, max_steps=60))
        policy, _ = train_policy(res.records, res.reward_model, cfg, seed=0)
        finals.append(np.mean([kl_to_reference(policy, x) for x in prompts]))
    assert finals[0] >= finals[1] >= finals[2]


def test_pipeline_improves_corrective_probability(qa_run):
    env, res = qa_run
    from retrospect.actor import ScriptedActor
    from retrospect.envs import rollout
    from retrospect.retro import build_reflection_prompt
    prompts, modes = [], []
    for task in env.split("train"):
        if task.failure_mode is not FailureMode.NONE:
            prompts.append(build_reflection_prompt(rollout(env, task, ScriptedActor())).rendered)
            modes.append(task.failure_mode)
    assert corrective_probability(res.policy, prompts, modes) > corrective_probability(
        RetroPolicy.uniform(), prompts, modes)
    assert res.reward_model.train_accuracy > 0.9
    assert res.manifest["metrics"]["pairs"] > 0


def test_collect_records_are_valid_pairs(qa_run):
    _, res = qa_run
    for r in res.records:
        r.validate()
        assert r.sample_temperature == 0.9
        assert r.old_logprob == pytest.approx(np.log(1 / K))
    keys = [r.group_key for r in res.records]
    assert all(keys.count(k) == 2 for k in keys)
    assert max(r.trial_index for r in res.records) <= PipelineConfig().collect_trials


def test_collect_parallel_matches_serial():
    env = make_env("synthqa", seed=2)
    tasks = env.split("train")[:20]
    cfg = PipelineConfig()
    serial = collect(env, tasks, RetroPolicy.uniform(), cfg, seed=2)
    parallel = collect(env, tasks, RetroPolicy.uniform(), cfg, seed=2, jobs=4)
    assert serial == parallel


def test_pipeline_deterministic_bytes(tmp_path):
    env = make_env("synthqa", seed=4)
    cfg = PipelineConfig(ppo=PPOConfig(max_steps=40))
    run_pipeline(env, env.split("train"), cfg, seed=4, out_dir=tmp_path / "a")
    run_pipeline(env, env.split("train"), cfg, seed=4, out_dir=tmp_path / "b", jobs=3)
    for name in ("buffer.jsonl", "reward_model.ckpt", "policy.ckpt", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pipeline_all_gold_empty_buffer():
    env = make_env("synthqa", seed=0)
    gold = [TaskSpec(t.env_id, t.task_id, t.goal_text, t.hidden_answer, FailureMode.NONE, t.gold_actions,
                     t.gold_actions, t.split) for t in env.split("train")]
    with pytest.raises(EmptyBuffer) as info:
        run_pipeline(env, gold, seed=0)
    assert info.value.stage == "reward_model"


def test_library_size_matches_policy():
    assert RetroPolicy.uniform().theta.shape == (N_FEATURES, len(default_library()))
