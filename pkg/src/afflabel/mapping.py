"""Cluster-to-class identity via a linear assignment problem.

The development set scores every bijection g from clusters to classes by
summing, over clusters k, the responsibilities that class-g(k)'s labeled
rows put on cluster k. The maximizing bijection is found with an
augmenting-path assignment solver (O(K^3)); K <= 3 simply enumerates.
Ties are broken toward the lexicographically smallest permutation so runs
are reproducible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError

_EXHAUSTIVE_MAX = 3


@dataclass(frozen=True, eq=False)
class ClusterClassMapping:
    """A bijection g: cluster -> class, its objective, and the weight matrix."""

    g: tuple[int, ...]
    objective: float
    weights: np.ndarray

    def __post_init__(self):
        k = len(self.g)
        if sorted(self.g) != list(range(k)):
            raise ConfigError(f"mapping {self.g} is not a bijection over {k} clusters")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (k, k):
            raise ConfigError(f"weight matrix shape {w.shape} does not match K={k}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "g", tuple(int(c) for c in self.g))
        if self.objective != _objective(w, self.g):
            raise ConfigError("stored objective does not equal sum of selected weights")

    @property
    def n_classes(self) -> int:
        return len(self.g)

    def class_of_cluster(self, k: int) -> int:
        return self.g[k]

    def inverse(self) -> tuple[int, ...]:
        inv = [0] * len(self.g)
        for k, c in enumerate(self.g):
            inv[c] = k
        return tuple(inv)


def _objective(w: np.ndarray, g: Sequence[int]) -> float:
    # fsum is order-independent, so equal-objective permutations compare equal
    return math.fsum(w[k, g[k]] for k in range(len(g)))


def mapping_weights(gamma: np.ndarray, dev_rows_by_class: Sequence[np.ndarray]) -> np.ndarray:
    """K x K matrix: w[k, k'] sums cluster-k responsibilities of class-k' dev rows."""
    gamma = np.asarray(gamma, dtype=np.float64)
    k = gamma.shape[1]
    if len(dev_rows_by_class) != k:
        raise ConfigError(
            f"got dev rows for {len(dev_rows_by_class)} classes, expected K={k}")
    w = np.empty((k, k))
    for k_prime, rows in enumerate(dev_rows_by_class):
        rows = np.asarray(rows, dtype=np.intp)
        if rows.size == 0:
            raise ConfigError(f"class {k_prime} has no development rows")
        if rows.min() < 0 or rows.max() >= gamma.shape[0]:
            raise ConfigError(f"class {k_prime} dev rows out of range")
        w[:, k_prime] = gamma[rows].sum(axis=0)
    return w


def _lex_smallest_optimal(w: np.ndarray, best_value: float) -> tuple[int, ...]:
    """Fix classes row by row, keeping the smallest class that still completes
    to the optimal objective."""
    k = w.shape[0]
    prefix: list[int] = []
    free = list(range(k))
    for row in range(k):
        for c in sorted(free):
            rest_rows = np.arange(row + 1, k)
            rest_cols = np.array([x for x in free if x != c], dtype=np.intp)
            candidate = prefix + [c]
            if rest_rows.size:
                sub = w[np.ix_(rest_rows, rest_cols)]
                rr, cc = linear_sum_assignment(-sub)
                completion = [0] * rest_rows.size
                for a, b in zip(rr, cc):
                    completion[a] = int(rest_cols[b])
                candidate = candidate + completion
            if _objective(w, candidate) == best_value:
                prefix.append(c)
                free.remove(c)
                break
        else:  # pragma: no cover - optimum always completable
            raise AssertionError("no completion reaches the optimal objective")
    return tuple(prefix)


def solve_mapping(w: np.ndarray) -> ClusterClassMapping:
    """Maximize sum_k w[k, g(k)] over bijections g."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
        raise ConfigError(f"weight matrix must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ConfigError("weight matrix contains non-finite values")
    k = w.shape[0]

    if k <= _EXHAUSTIVE_MAX:
        best_g = None
        best_value = -math.inf
        for perm in itertools.permutations(range(k)):
            value = _objective(w, perm)
            if value > best_value:
                best_value = value
                best_g = perm
        g = best_g
    else:
        _, cols = linear_sum_assignment(-w)
        best_value = _objective(w, cols)
        g = _lex_smallest_optimal(w, best_value)

    return ClusterClassMapping(g=tuple(g), objective=_objective(w, g), weights=w)


def apply_mapping(labels: np.ndarray, g: Sequence[int]) -> np.ndarray:
    """Rearrange prediction columns so column g(k) holds cluster k's column."""
    labels = np.asarray(labels)
    k = labels.shape[1]
    if sorted(g) != list(range(k)):
        raise ConfigError(f"mapping {tuple(g)} is not a bijection over {k} columns")
    out = np.empty_like(labels)
    for cluster, cls in enumerate(g):
        out[:, cls] = labels[:, cluster]
    return out
