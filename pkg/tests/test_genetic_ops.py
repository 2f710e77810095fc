from __future__ import annotations

import math

import numpy as np
import pytest

from topogen.genetic_ops import (
    RankSelectConfig,
    Sense,
    VariationConfig,
    exp_rank_weight,
    mutate,
    rank_select,
    recombine,
    similarity_scores,
)


def test_rank_one_has_zero_weight():
    for alpha in (0.5, 1.3, 2.0, 20.0):
        for n in (1, 2, 30):
            assert exp_rank_weight(1, alpha, n) == 0.0


def test_weight_formula_small_pool():
    w = exp_rank_weight(2, 1.3, 2)
    assert w == pytest.approx(math.exp(1.3) - 1.0)
    assert w == pytest.approx(2.6693, abs=1e-4)
    total = exp_rank_weight(1, 1.3, 2) + w
    assert [0.0, w / total] == [0.0, 1.0]


def test_weight_strictly_increasing_in_rank():
    weights = [exp_rank_weight(r, 1.3, 30) for r in range(1, 31)]
    assert all(b > a for a, b in zip(weights, weights[1:]))


def test_weight_argument_validation():
    with pytest.raises(ValueError):
        exp_rank_weight(0, 1.3, 10)
    with pytest.raises(ValueError):
        exp_rank_weight(11, 1.3, 10)
    with pytest.raises(ValueError):
        exp_rank_weight(1, -1.0, 10)
    with pytest.raises(ValueError):
        exp_rank_weight(1, 1.3, 0)


def test_selection_frequencies_match_normalized_weights():
    # Monte-Carlo vs the analytic weights: pool of 30 distinct scores,
    # 1e5 single draws, 3-sigma multinomial bounds per rank.
    n, alpha, trials = 30, 1.3, 100_000
    scores = list(range(n))  # item k has score k; maximize => rank k+1
    cfg = RankSelectConfig(pressure=alpha, sense=Sense.MAXIMIZE)
    weights = np.array([exp_rank_weight(r, alpha, n) for r in range(1, n + 1)])
    probs = weights / weights.sum()
    rng = np.random.default_rng(123)
    counts = np.zeros(n)
    for _ in range(trials):
        (pick,) = rank_select(scores, float, cfg, 1, rng)
        counts[pick] += 1
    freqs = counts / trials
    sigma = np.sqrt(probs * (1 - probs) / trials)
    assert np.all(np.abs(freqs - probs) <= 3 * sigma + 1e-12)


def test_single_item_pool_is_deterministic():
    rng = np.random.default_rng(0)
    cfg = RankSelectConfig(1.3, Sense.MINIMIZE)
    assert rank_select(["only"], lambda x: 0.0, cfg, 1, rng) == ["only"]


def test_count_at_least_pool_returns_permutation():
    rng = np.random.default_rng(5)
    cfg = RankSelectConfig(1.3, Sense.MINIMIZE)
    pool = [10, 11, 12, 13]
    out = rank_select(pool, lambda x: float(x), cfg, 10, rng)
    assert sorted(out) == pool


def test_two_item_pool_never_selects_the_worse_item():
    # the rival's weight is exp(0) - 1 = 0, so the better item wins always
    rng = np.random.default_rng(7)
    cfg = RankSelectConfig(1.3, Sense.MINIMIZE)
    pool = ["better", "worse"]
    score = {"better": 1.0, "worse": 2.0}
    for _ in range(100_000):
        (pick,) = rank_select(pool, score.__getitem__, cfg, 1, rng)
        assert pick == "better"


def test_high_pressure_concentrates_on_best():
    rng = np.random.default_rng(11)
    cfg = RankSelectConfig(20.0, Sense.MAXIMIZE)
    pool = list(range(10))
    hits = sum(
        rank_select(pool, float, cfg, 1, rng)[0] == 9 for _ in range(10_000)
    )
    assert hits / 10_000 > 0.999


def test_tie_break_is_deterministic():
    rng = np.random.default_rng(1)
    cfg = RankSelectConfig(5.0, Sense.MINIMIZE)
    pool = ["a", "b", "c"]
    picks = {rank_select(pool, lambda x: 0.0, cfg, 1, np.random.default_rng(9))[0]
             for _ in range(50)}
    assert len(picks) == 1  # same rng seed, all-tied scores: same answer every time


def test_empty_pool_and_bad_count():
    rng = np.random.default_rng(0)
    cfg = RankSelectConfig(1.3, Sense.MINIMIZE)
    with pytest.raises(ValueError):
        rank_select([], lambda x: 0.0, cfg, 1, rng)
    with pytest.raises(ValueError):
        rank_select([1], float, cfg, 0, rng)


def test_distance_zero_parent_is_best_ranked():
    # scoring direction check: were the parent in the candidate set, its
    # distance 0 would top the ranking and the rival would be unselectable
    rng = np.random.default_rng(3)
    cfg = RankSelectConfig(1.3, Sense.MINIMIZE)
    pool = ["p", "q"]
    score = {"p": 0.0, "q": 4.0}
    for _ in range(1000):
        (pick,) = rank_select(pool, score.__getitem__, cfg, 1, rng)
        assert pick == "p"


def test_mutate_returns_feasible_non_population_designs(loop4_space):
    rng = np.random.default_rng(21)
    population = [0, 5, 11]
    cfg = VariationConfig(mutation_count=200, candidate_pool_size=10**6)
    children = mutate(population, loop4_space, cfg, rng)
    assert len(children) == 200
    assert set(children).isdisjoint(population)
    assert all(0 <= c < len(loop4_space) for c in children)


def test_mutate_candidate_pool_clamp_and_determinism(loop4_space):
    cfg = VariationConfig(mutation_count=30, candidate_pool_size=10)
    out1 = mutate([0, 1], loop4_space, cfg, np.random.default_rng(99))
    out2 = mutate([0, 1], loop4_space, cfg, np.random.default_rng(99))
    assert out1 == out2
    out3 = mutate([0, 1], loop4_space, cfg, np.random.default_rng(100))
    assert out1 != out3  # overwhelmingly likely for 30 draws


def test_mutate_validation(loop4_space):
    from topogen.topology import ComponentInstance, ComponentType, Design, DesignSpace

    rng = np.random.default_rng(0)
    cfg = VariationConfig()
    with pytest.raises(ValueError):
        mutate([], loop4_space, cfg, rng)
    t = ComponentType("t", output_ports=("o",))
    one = DesignSpace([ComponentInstance("x", t)], [Design(nodes=("x",), edges=())])
    with pytest.raises(ValueError):
        mutate([0], one, cfg, rng)


def test_offspring_distances_stochastically_smaller_than_uniform(loop6_space):
    # parent fixed by a single-member population; compare the empirical CDF
    # of selected-child distances against uniform candidate distances
    parent = 137
    cfg = VariationConfig(mutation_count=10_000, candidate_pool_size=20_000,
                          mutation_pressure=1.3)
    children = mutate([parent], loop6_space, cfg, np.random.default_rng(31))
    d_mut = loop6_space.hamming_many(parent, np.array(children))

    eligible = np.array([k for k in range(len(loop6_space)) if k != parent])
    uni = np.random.default_rng(32).choice(eligible, size=10_000, replace=True)
    d_uni = loop6_space.hamming_many(parent, uni)

    assert d_mut.mean() < d_uni.mean() - 1.0
    grid = np.arange(0, d_uni.max() + 1)
    cdf_mut = np.array([(d_mut <= t).mean() for t in grid])
    cdf_uni = np.array([(d_uni <= t).mean() for t in grid])
    assert np.all(cdf_mut >= cdf_uni - 0.02)
    assert cdf_mut.max() == 1.0


def test_recombine_score_is_mean_distance(loop4_space):
    cand = np.arange(len(loop4_space))
    d1 = loop4_space.hamming_many(2, cand)
    d2 = loop4_space.hamming_many(9, cand)
    scores = similarity_scores(loop4_space, [2, 9], cand)
    assert np.allclose(scores, 0.5 * d1 + 0.5 * d2)
    # equidistant candidate scores exactly k
    k = np.flatnonzero(d1 == d2)
    assert np.all(scores[k] == d1[k])


def test_duplicate_parents_reduce_to_mutation_scoring(loop4_space):
    cand = np.arange(len(loop4_space))
    assert np.array_equal(
        similarity_scores(loop4_space, [5, 5], cand),
        loop4_space.hamming_many(5, cand).astype(float),
    )


def test_recombine_validation(loop4_space):
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        recombine([1], loop4_space, VariationConfig(), rng)


def test_recombine_children_beat_uniform_mean_distance(loop6_space):
    p1, p2 = 100, 600
    cfg = VariationConfig(recombination_count=10_000, recombination_pressure=2.0,
                          candidate_pool_size=20_000)
    children = recombine([p1, p2], loop6_space, cfg, np.random.default_rng(41))
    d_sel = similarity_scores(loop6_space, [p1, p2], np.array(children))

    eligible = np.array([k for k in range(len(loop6_space)) if k not in (p1, p2)])
    uni = np.random.default_rng(42).choice(eligible, size=10_000, replace=True)
    d_uni = similarity_scores(loop6_space, [p1, p2], uni)
    assert d_sel.mean() <= d_uni.mean() - 0.5


def test_reproducibility_of_recombine(loop4_space):
    cfg = VariationConfig(recombination_count=25)
    a = recombine([0, 3, 7], loop4_space, cfg, np.random.default_rng(55))
    b = recombine([0, 3, 7], loop4_space, cfg, np.random.default_rng(55))
    assert a == b


def test_config_validation():
    with pytest.raises(ValueError):
        VariationConfig(mutation_pressure=0.0)
    with pytest.raises(ValueError):
        RankSelectConfig(pressure=-1.0)
