import numpy as np
import pytest

from retrospect.retro import N_FEATURES, RetroPolicy
from retrospect.retro.policy import sample_response, sample_with
from retrospect.rlhf import RewardModel
from retrospect.sampler import best_of_n, best_of_n_draws
from retrospect.seeding import rng

K = 8
PROMPT = "Environment: synthqa\nAction 1: Search[A]\nAction 2: Search[A]\nEpisode return: 0.0000"


def ranked_rm():
    # template k scores k, so template 7 is the unique best
    return RewardModel(np.tile(np.arange(K, dtype=float), (N_FEATURES, 1)))


def test_n_one_is_a_plain_sample():
    policy, rm = RetroPolicy.uniform(), ranked_rm()
    for seed in range(50):
        k, text, _ = sample_with(policy, PROMPT, 0.9, rng(seed))
        assert best_of_n(policy, rm, PROMPT, n=1, temperature=0.9, seed=seed) == (k, text)
        assert sample_response(policy, PROMPT, 0.9, seed)[0] == k


def test_best_scores_at_least_every_draw():
    gen = np.random.default_rng(0)
    policy = RetroPolicy.uniform().with_theta(gen.normal(size=(N_FEATURES, K)))
    rm = RewardModel(gen.normal(size=(N_FEATURES, K)))
    for seed in range(1000):
        best, draws = best_of_n_draws(policy, rm, PROMPT, n=4, temperature=0.9, seed=seed)
        assert len(draws) == 4
        assert all(best.score >= d.score for d in draws)
        assert best in draws


def test_ties_go_to_smallest_id():
    policy, rm = RetroPolicy.uniform(), RewardModel.zeros()
    for seed in range(200):
        best, draws = best_of_n_draws(policy, rm, PROMPT, n=5, seed=seed)
        assert best.response_id == min(d.response_id for d in draws)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16])
def test_top_template_frequency_matches_closed_form(n):
    # uniform policy: P(best template among n draws) = 1 - (7/8)^n
    policy, rm = RetroPolicy.uniform(), ranked_rm()
    trials = 2000
    hits = sum(best_of_n(policy, rm, PROMPT, n=n, seed=s)[0] == K - 1 for s in range(trials))
    p = 1 - (1 - 1 / K) ** n
    assert abs(hits / trials - p) < 3 * np.sqrt(p * (1 - p) / trials) + 1e-9


def test_frequency_increases_with_n():
    policy, rm = RetroPolicy.uniform(), ranked_rm()
    freqs = [np.mean([best_of_n(policy, rm, PROMPT, n=n, seed=s)[0] == K - 1 for s in range(500)])
             for n in (1, 4, 16, 64)]
    assert all(b >= a for a, b in zip(freqs, freqs[1:]))
    assert freqs[-1] > 0.99


def test_deterministic_and_validated():
    policy, rm = RetroPolicy.uniform(), ranked_rm()
    assert best_of_n_draws(policy, rm, PROMPT, 4, 0.9, 11) == best_of_n_draws(policy, rm, PROMPT, 4, 0.9, 11)
    with pytest.raises(ValueError):
        best_of_n(policy, rm, PROMPT, n=0)
