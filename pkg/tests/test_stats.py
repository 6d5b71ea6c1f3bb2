"""Nonparametric statistics against hand oracles and scipy cross-checks."""

import itertools
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from coldsim import (ValidationError, benjamini_hochberg, chi_square_sf,
                     kruskal_wallis, wilcoxon_rank_sum)


# --- oracles -----------------------------------------------------------

def brute_ranksum_p(a, b):
    """Exhaustive two-sided permutation p for tie-free samples."""
    pooled = sorted(a) + sorted(b)
    assert len(set(pooled)) == len(pooled)
    n1 = len(a)
    ranks = {v: i + 1 for i, v in enumerate(sorted(pooled))}
    observed = sum(ranks[v] for v in a) - n1 * (n1 + 1) / 2
    sums = [sum(c) for c in
            itertools.combinations(range(1, len(pooled) + 1), n1)]
    us = [s - n1 * (n1 + 1) / 2 for s in sums]
    low = sum(1 for u in us if u <= observed) / len(us)
    high = sum(1 for u in us if u >= observed) / len(us)
    return min(1.0, 2.0 * min(low, high))


def stepwise_bh(p_values):
    """Adjusted p-values computed directly from the definition."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    for pos, idx in enumerate(order):
        adjusted[idx] = min(
            min(m * p_values[order[j]] / (j + 1) for j in range(pos, m)), 1.0)
    return adjusted


# --- Kruskal-Wallis ----------------------------------------------------

def test_kw_hand_computed_examples():
    # rank sums 6/15/24 over ranks 1..9
    res = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    assert res.statistic == pytest.approx(7.2, abs=1e-12)
    assert res.df == 2
    res = kruskal_wallis([[1, 2], [3, 4]])
    assert res.statistic == pytest.approx(2.4, abs=1e-12)
    assert res.df == 1


def test_kw_identical_groups():
    res = kruskal_wallis([[5, 5, 5], [5, 5], [5, 5, 5, 5]])
    assert res.statistic == 0.0
    assert res.p_value == 1.0


def test_kw_requires_two_nonempty_groups():
    with pytest.raises(ValidationError):
        kruskal_wallis([[1, 2, 3]])
    with pytest.raises(ValidationError):
        kruskal_wallis([[1, 2], []])


def test_kw_monotone_transform_invariance():
    rng = np.random.default_rng(0)
    for _ in range(30):
        groups = [list(rng.normal(size=rng.integers(3, 8))) for _ in range(3)]
        base = kruskal_wallis(groups)
        warped = kruskal_wallis([[math.exp(v) for v in g] for g in groups])
        assert warped.statistic == pytest.approx(base.statistic, abs=1e-9)


def test_kw_matches_scipy_with_ties():
    rng = np.random.default_rng(1)
    for _ in range(50):
        groups = [list(rng.integers(0, 6, size=rng.integers(3, 10)).astype(float))
                  for _ in range(rng.integers(2, 5))]
        if len({v for g in groups for v in g}) == 1:
            continue
        ours = kruskal_wallis(groups)
        ref = scipy.stats.kruskal(*groups)
        assert ours.statistic == pytest.approx(ref.statistic, abs=1e-9)
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-9)


# --- Wilcoxon rank-sum -------------------------------------------------

def test_ranksum_exact_examples():
    res = wilcoxon_rank_sum([1, 2], [3, 4])
    assert res.statistic == 0
    assert res.p_value == pytest.approx(1 / 3, abs=1e-12)
    assert res.method == "wilcoxon_exact"
    res = wilcoxon_rank_sum([1, 2, 3], [4, 5, 6])
    assert res.statistic == 0
    assert res.p_value == pytest.approx(0.1, abs=1e-12)


def test_ranksum_identical_samples():
    res = wilcoxon_rank_sum([2.5, 2.5, 2.5], [2.5, 2.5, 2.5])
    assert res.p_value == 1.0


def test_ranksum_exact_equals_brute_force_enumeration():
    """Exhaustive check over every tie-free input shape with n <= 10."""
    for n in range(2, 11):
        for n1 in range(1, n):
            ranks = list(range(1, n + 1))
            for combo in itertools.combinations(ranks, n1):
                a = [float(r) for r in combo]
                b = [float(r) for r in ranks if r not in combo]
                res = wilcoxon_rank_sum(a, b)
                assert res.method == "wilcoxon_exact"
                assert res.p_value == pytest.approx(brute_ranksum_p(a, b),
                                                    abs=1e-12)


def test_ranksum_normal_path_with_ties():
    rng = np.random.default_rng(2)
    a = list(rng.integers(0, 4, size=25).astype(float))
    b = list(rng.integers(1, 5, size=30).astype(float))
    ours = wilcoxon_rank_sum(a, b)
    assert ours.method == "wilcoxon_normal"
    ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic")
    assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-9)


def test_ranksum_empty_sample():
    with pytest.raises(ValidationError):
        wilcoxon_rank_sum([], [1.0])


# --- Benjamini-Hochberg ------------------------------------------------

def test_bh_examples():
    assert benjamini_hochberg([0.01, 0.02, 0.03, 0.04, 0.05]) == pytest.approx(
        [0.05, 0.05, 0.05, 0.05, 0.05], abs=1e-12)
    assert benjamini_hochberg([0.5]) == [0.5]
    assert benjamini_hochberg([0.04, 0.9]) == pytest.approx([0.08, 0.9], abs=1e-12)


def test_bh_validation():
    with pytest.raises(ValidationError):
        benjamini_hochberg([0.5, 1.5])


def test_bh_matches_stepwise_definition_random():
    rng = np.random.default_rng(3)
    for _ in range(500):
        m = int(rng.integers(1, 15))
        p = [float(v) for v in rng.uniform(0, 1, size=m)]
        assert benjamini_hochberg(p) == pytest.approx(stepwise_bh(p), abs=1e-12)


def test_bh_properties():
    rng = np.random.default_rng(4)
    for _ in range(200):
        p = [float(v) for v in rng.uniform(0, 1, size=rng.integers(1, 12))]
        adj = benjamini_hochberg(p)
        assert all(a >= x - 1e-15 for a, x in zip(adj, p))
        assert all(a <= 1.0 for a in adj)
        order = sorted(range(len(p)), key=lambda i: p[i])
        sorted_adj = [adj[i] for i in order]
        assert all(x <= y + 1e-15 for x, y in zip(sorted_adj, sorted_adj[1:]))


# --- chi-square survival function --------------------------------------

def test_chi2_full_mass_at_zero():
    for df in (1, 2, 7, 50):
        assert chi_square_sf(0.0, df) == 1.0


def test_chi2_df2_closed_form():
    for x in (0.5, 1.0, 3.6, 7.2, 20.0, 100.0):
        assert chi_square_sf(x, 2) == pytest.approx(math.exp(-x / 2), abs=1e-12)
    assert chi_square_sf(7.2, 2) == pytest.approx(math.exp(-3.6), abs=1e-12)


def test_chi2_standard_value():
    assert chi_square_sf(3.84, 1) == pytest.approx(0.0500, abs=1e-4)


def test_chi2_against_scipy_grid():
    for df in (1, 2, 3, 5, 10, 25, 50):
        for x in (0.01, 0.5, 1.0, 4.0, 10.0, 50.0, 120.0, 200.0):
            ref = float(scipy.special.gammaincc(df / 2.0, x / 2.0))
            assert chi_square_sf(x, df) == pytest.approx(ref, abs=1e-10)


def test_chi2_strictly_decreasing():
    for df in (1, 4, 9):
        values = [chi_square_sf(x, df) for x in np.linspace(0.01, 60, 120)]
        assert all(a > b for a, b in zip(values, values[1:]))


def test_chi2_domain_errors():
    with pytest.raises(ValidationError):
        chi_square_sf(-1.0, 2)
    with pytest.raises(ValidationError):
        chi_square_sf(1.0, 0)
