"""Mapping-probability bounds: DP vs enumeration, binomial tails, simulations."""

import itertools
import math

import numpy as np
import pytest

from afflabel.errors import ConfigError, InfeasibleQueryError
from afflabel.mapping import solve_mapping
from afflabel.theory import (DevSizeRequirement, bound_curve,
                             mapping_probability_bound, min_devset_size,
                             multinomial_pmf, pl_correct_class,
                             pl_correct_class_enumerated,
                             wrong_cluster_probability)


def binomial_strict_majority_tail(d, eta):
    """K=2 oracle: P(correct-cluster count > d/2)."""
    total = 0.0
    for j in range(d // 2 + 1, d + 1):
        total += math.comb(d, j) * eta ** j * (1 - eta) ** (d - j)
    return total


def all_count_vectors(d, parts):
    if parts == 1:
        yield (d,)
        return
    for first in range(d + 1):
        for rest in all_count_vectors(d - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# multinomial pmf
# ---------------------------------------------------------------------------

def test_pmf_single_draw_on_correct_cluster():
    rho = wrong_cluster_probability(3, 0.75)
    assert multinomial_pmf([1, 0, 0], 0.75, rho) == pytest.approx(0.75, abs=1e-12)


def test_pmf_two_draws_all_correct():
    rho = wrong_cluster_probability(2, 0.8)
    assert multinomial_pmf([2, 0], 0.8, rho) == pytest.approx(0.64, abs=1e-12)


def test_pmf_normalizes_with_default_rho():
    eta, k, d = 0.7, 3, 4
    rho = wrong_cluster_probability(k, eta)
    total = sum(multinomial_pmf(c, eta, rho) for c in all_count_vectors(d, k))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_pmf_does_not_normalize_with_literal_rho():
    eta, k, d = 0.7, 3, 4
    rho = wrong_cluster_probability(k, eta, literal_rho=True)
    total = sum(multinomial_pmf(c, eta, rho) for c in all_count_vectors(d, k))
    # eta + (K-1)*rho = 1.4, so the total is 1.4^4, nowhere near 1
    assert total == pytest.approx(1.4 ** 4, abs=1e-9)
    assert abs(total - 1.0) > 0.5


def test_pmf_rejects_negative_counts():
    with pytest.raises(ConfigError, match="nonnegative"):
        multinomial_pmf([2, -1], 0.8, 0.2)


# ---------------------------------------------------------------------------
# per-class bound Pl
# ---------------------------------------------------------------------------

def test_pl_perfect_accuracy_is_one():
    for d in (1, 3, 10):
        assert pl_correct_class(2, 1.0, d) == pytest.approx(1.0, abs=1e-12)
        assert pl_correct_class(4, 1.0, d) == pytest.approx(1.0, abs=1e-12)


def test_pl_single_draw_two_classes():
    assert pl_correct_class(2, 0.8, 1) == pytest.approx(0.8, abs=1e-12)


def test_pl_matches_binomial_tail_for_two_classes():
    for d in range(1, 26):
        for eta in (0.55, 0.7, 0.8, 0.95):
            expected = binomial_strict_majority_tail(d, eta)
            assert pl_correct_class(2, eta, d) == pytest.approx(expected, abs=1e-12)


def test_pl_frozen_value_k2_eta08_d10():
    # binomial strict-majority tail, computed by the oracle above: 0.9672065024
    assert pl_correct_class(2, 0.8, 10) == pytest.approx(0.9672065024, abs=1e-9)


def test_pl_dp_equals_enumeration_on_grid():
    for k in (2, 3, 4):
        for d in range(0, 7):
            for eta in (0.5, 0.7, 0.9):
                dp = pl_correct_class(k, eta, d)
                brute = pl_correct_class_enumerated(k, eta, d)
                assert dp == pytest.approx(brute, abs=1e-12), (k, d, eta)


def test_pl_dp_equals_enumeration_with_literal_rho():
    for d in range(0, 6):
        dp = pl_correct_class(3, 0.6, d, literal_rho=True)
        brute = pl_correct_class_enumerated(3, 0.6, d, literal_rho=True)
        assert dp == pytest.approx(brute, abs=1e-12)


def test_pl_zero_dev_examples_is_zero():
    assert pl_correct_class(3, 0.9, 0) == 0.0
    assert pl_correct_class_enumerated(3, 0.9, 0) == 0.0


def test_pl_monotone_in_eta():
    for k, d in [(2, 5), (3, 4), (4, 6)]:
        values = [pl_correct_class(k, eta, d) for eta in np.linspace(0.4, 1.0, 13)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_pl_monotone_in_d_within_parity():
    # ties are excluded, so even d dips below its odd neighbors; within one
    # parity class the bound is non-decreasing and it approaches 1 overall
    for eta in (0.7, 0.9):
        odd = [pl_correct_class(2, eta, d) for d in range(1, 40, 2)]
        even = [pl_correct_class(2, eta, d) for d in range(2, 40, 2)]
        assert all(b >= a - 1e-12 for a, b in zip(odd, odd[1:]))
        assert all(b >= a - 1e-12 for a, b in zip(even, even[1:]))
    assert pl_correct_class(2, 0.8, 1) > pl_correct_class(2, 0.8, 2)  # parity dip
    assert pl_correct_class(2, 0.7, 101) > 0.9999


def test_pl_large_d_avoids_underflow():
    value = pl_correct_class(3, 0.6, 400)
    assert 0.999 < value <= 1.0


# ---------------------------------------------------------------------------
# full-mapping bound and inverse query
# ---------------------------------------------------------------------------

def test_bound_is_pl_to_the_k():
    pl = pl_correct_class(2, 0.8, 10)
    assert mapping_probability_bound(2, 0.8, 10) == pytest.approx(pl ** 2, abs=1e-15)
    assert mapping_probability_bound(2, 0.8, 10) == pytest.approx(0.9354884183, abs=1e-9)
    assert mapping_probability_bound(3, 1.0, 2) == pytest.approx(1.0, abs=1e-12)


def test_bound_near_one_at_m20():
    # with eta=0.8 and K=2, twenty dev examples already push the bound > 0.93
    assert mapping_probability_bound(2, 0.8, 10) > 0.93


def test_min_devset_size_perfect_accuracy():
    res = min_devset_size(2, 1.0, 0.99)
    assert res == DevSizeRequirement(per_class=1, total=2, bound=1.0)
    assert min_devset_size(5, 1.0, 0.9999).total == 5


def test_min_devset_size_matches_direct_scan():
    target = 0.9
    expected_d = next(d for d in itertools.count(1)
                      if binomial_strict_majority_tail(d, 0.8) ** 2 >= target)
    res = min_devset_size(2, 0.8, target)
    assert res.per_class == expected_d
    assert res.total == 2 * expected_d
    assert res.bound >= target


def test_min_devset_size_uninformative_accuracy():
    with pytest.raises(InfeasibleQueryError, match="unreachable confidence"):
        min_devset_size(2, 0.5, 0.9)


def test_min_devset_size_cap_carries_best_bound():
    with pytest.raises(InfeasibleQueryError) as err:
        min_devset_size(2, 0.51, 0.999999, max_per_class=10)
    assert err.value.best_bound is not None
    assert 0.0 < err.value.best_bound < 0.999999


def test_bound_curve_rows():
    rows = bound_curve(2, 0.8, [1, 2, 3])
    assert [r[0] for r in rows] == [1, 2, 3]
    assert [r[1] for r in rows] == [2, 4, 6]
    for d, m, pl, bound in rows:
        assert bound == pytest.approx(pl ** 2, abs=1e-15)


# ---------------------------------------------------------------------------
# bound consistency against the actual mapping procedure
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k,eta,d", [(2, 0.8, 5), (3, 0.7, 4), (2, 0.6, 9)])
def test_bound_holds_in_simulation(k, eta, d):
    # simulate hard dev-row cluster assignments at accuracy eta, run the
    # real assignment solver, and check the empirical correct-mapping rate
    # against the theoretical lower bound (one-sided, 95% confidence)
    rng = np.random.default_rng((k, int(eta * 100), d))
    trials = 2000
    rho = wrong_cluster_probability(k, eta)
    probs = np.full((k, k), rho)
    np.fill_diagonal(probs, eta)  # row: true class; col: cluster landed in
    correct = 0
    for _ in range(trials):
        w = np.zeros((k, k))
        for cls in range(k):
            counts = rng.multinomial(d, probs[cls])
            w[:, cls] += counts  # hard gamma: w[cluster, class]
        if solve_mapping(w).g == tuple(range(k)):
            correct += 1
    bound = mapping_probability_bound(k, eta, d)
    p_hat = correct / trials
    margin = 1.645 * math.sqrt(max(p_hat * (1 - p_hat), 1e-6) / trials)
    assert p_hat >= bound - margin
