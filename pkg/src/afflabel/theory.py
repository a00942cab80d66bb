"""Lower bounds on the probability of a correct cluster-to-class mapping.

Model: each of the d labeled examples of one class lands in the correct
cluster with probability eta (the labeling accuracy) and in each of the
K-1 wrong clusters with equal probability rho = (1-eta)/(K-1), so the
per-cluster counts follow a multinomial. The class maps correctly whenever
the correct cluster holds a strict majority of its labeled examples; ties
are excluded, which keeps the result a true lower bound. The probability
that all K classes map correctly is bounded below by the K-th power of the
per-class bound, and the minimal development set size is the smallest
per-class count whose bound reaches a requested confidence.

``literal_rho`` switches the wrong-cluster probability to eta/(K-1). That
variant does not normalize the multinomial (the enumeration oracle in the
test suite demonstrates it) and exists only for comparison; the default is
the normalizing form.

The strict-majority sum is evaluated by a dynamic program: condition on
the correct-cluster count t, then sweep the remaining clusters one at a
time, convolving the per-cluster weight series rho^u / u! (u < t) over the
remaining budget. Cost is O(K d^2) per candidate t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, xlogy

from .errors import ConfigError, InfeasibleQueryError

DEFAULT_MAX_PER_CLASS = 500


@dataclass(frozen=True)
class DevSizeRequirement:
    """Result of the inverse query: smallest per-class count hitting a confidence."""

    per_class: int
    total: int
    bound: float


def wrong_cluster_probability(n_classes: int, eta: float, literal_rho: bool = False) -> float:
    """rho, the probability of landing in one particular wrong cluster."""
    _validate_query(n_classes, eta)
    return (eta if literal_rho else 1.0 - eta) / (n_classes - 1)


def _validate_query(n_classes: int, eta: float) -> None:
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    if not 0.0 < eta <= 1.0:
        raise ConfigError(f"labeling accuracy must be in (0, 1], got {eta}")


def multinomial_pmf(counts, eta: float, rho: float, correct_index: int = 0) -> float:
    """Probability of one per-cluster count vector for a class's d labeled rows.

    d! / prod(counts!) * eta^counts[correct] * rho^(d - counts[correct]),
    evaluated through log-gamma.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.min() < 0:
        raise ConfigError(f"counts must be nonnegative, got {counts.tolist()}")
    if not 0 <= correct_index < counts.size:
        raise ConfigError(f"correct_index {correct_index} out of range")
    d = int(counts.sum())
    correct = int(counts[correct_index])
    log_p = (
        gammaln(d + 1)
        - gammaln(counts + 1.0).sum()
        + xlogy(correct, eta)
        + xlogy(d - correct, rho)
    )
    return float(np.exp(log_p))


def _capped_weight_series(budget: int, parts: int, cap: int, log_rho: float) -> float:
    """log of sum over compositions of `budget` into `parts` parts, each <= cap,
    of prod_j rho^{d_j} / d_j!  (the inner sweep of the strict-majority DP).

    Returns -inf when no composition fits. The kernel rho^u / u! spans a huge
    dynamic range, so it is exponentially tilted to peak at budget/parts; a
    uniform tilt exp(lam*u) factors exactly through convolution and keeps the
    coefficient actually read out in a well-conditioned band.
    """
    if budget == 0 and parts == 0:
        return 0.0
    if parts == 0 or budget > parts * cap:
        return -np.inf
    top = min(cap, budget)
    u = np.arange(top + 1, dtype=np.float64)
    if np.isfinite(log_rho):
        lam = float(digamma(budget / parts + 1.0)) - log_rho
        lk = u * (log_rho + lam) - gammaln(u + 1.0)
    else:
        lam = 0.0
        lk = np.where(u == 0, 0.0, -np.inf)
    scale = float(lk.max())
    kernel = np.exp(lk - scale)
    acc = kernel.copy()
    acc_scale = scale
    for _ in range(parts - 1):
        acc = np.convolve(acc, kernel)[:budget + 1]
        acc_scale += scale
        peak = acc.max()
        if peak > 0.0:
            acc /= peak
            acc_scale += float(np.log(peak))
    if budget >= acc.size or acc[budget] <= 0.0:
        return -np.inf
    return float(np.log(acc[budget]) + acc_scale - lam * budget)


def pl_correct_class(n_classes: int, eta: float, d: int,
                     literal_rho: bool = False) -> float:
    """Lower bound on the probability that one class maps to its own cluster.

    Sums, over every count vector whose correct-cluster count strictly
    exceeds all others, the multinomial probability; computed by the
    conditioned dynamic program described in the module docstring.
    """
    _validate_query(n_classes, eta)
    if d < 0:
        raise ConfigError(f"per-class count must be nonnegative, got {d}")
    if d == 0:
        return 0.0
    rho = wrong_cluster_probability(n_classes, eta, literal_rho)
    with np.errstate(divide="ignore"):
        log_rho = float(np.log(rho)) if rho > 0.0 else -np.inf
        log_eta = float(np.log(eta)) if eta > 0.0 else -np.inf

    total = 0.0
    for t in range(1, d + 1):
        budget = d - t
        log_ways = _capped_weight_series(budget, n_classes - 1, t - 1, log_rho)
        if not np.isfinite(log_ways):
            continue
        log_term = gammaln(d + 1) - gammaln(t + 1) + t * log_eta + log_ways
        total += float(np.exp(log_term))
    if literal_rho:
        return total  # diagnostic mode: deliberately not a probability
    return min(total, 1.0)  # clip float-roundoff overshoot only


def pl_correct_class_enumerated(n_classes: int, eta: float, d: int,
                                literal_rho: bool = False) -> float:
    """Brute-force oracle: enumerate every composition of d into K counts."""
    _validate_query(n_classes, eta)
    if d == 0:
        return 0.0
    rho = wrong_cluster_probability(n_classes, eta, literal_rho)
    total = 0.0
    for counts in _compositions(d, n_classes):
        if counts[0] > max(counts[1:]):
            total += multinomial_pmf(counts, eta, rho, correct_index=0)
    return total


def _compositions(d: int, parts: int):
    if parts == 1:
        yield (d,)
        return
    for first in range(d + 1):
        for rest in _compositions(d - first, parts - 1):
            yield (first,) + rest


def mapping_probability_bound(n_classes: int, eta: float, d: int,
                              literal_rho: bool = False) -> float:
    """Lower bound on the probability that every class maps correctly: Pl^K."""
    return pl_correct_class(n_classes, eta, d, literal_rho) ** n_classes


def min_devset_size(n_classes: int, eta: float, confidence: float,
                    max_per_class: int = DEFAULT_MAX_PER_CLASS) -> DevSizeRequirement:
    """Smallest balanced development set whose mapping bound reaches a confidence.

    Scans d upward (the bound is not monotone across the even/odd tie
    boundary, so no bisection). Raises InfeasibleQueryError when eta carries
    no signal (eta <= 1/K) or when the cap is exhausted; the error carries
    the best bound achieved.
    """
    _validate_query(n_classes, eta)
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"confidence must be in (0, 1), got {confidence}")
    if eta <= 1.0 / n_classes:
        raise InfeasibleQueryError(
            f"unreachable confidence: accuracy {eta} is not better than random "
            f"guessing over {n_classes} classes")
    best = 0.0
    for d in range(1, max_per_class + 1):
        bound = mapping_probability_bound(n_classes, eta, d)
        best = max(best, bound)
        if bound >= confidence:
            return DevSizeRequirement(per_class=d, total=n_classes * d, bound=bound)
    raise InfeasibleQueryError(
        f"unreachable confidence: best bound {best:.6f} < {confidence} "
        f"within {max_per_class} examples per class", best_bound=best)


def bound_curve(n_classes: int, eta: float, d_values,
                literal_rho: bool = False) -> list[tuple[int, int, float, float]]:
    """(d, m, Pl, bound) rows for plotting bound-versus-dev-size curves."""
    rows = []
    for d in d_values:
        pl = pl_correct_class(n_classes, eta, int(d), literal_rho)
        rows.append((int(d), n_classes * int(d), pl, pl ** n_classes))
    return rows
