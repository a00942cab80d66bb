"""Multivariate-Bernoulli mixture over one-hot base-model predictions.

The label prediction matrices of all alpha base models are concatenated,
each K-wide block is one-hot encoded (highest class wins, ties to the
lowest index), and a K-component mixture of independent Bernoullis is
fitted by EM on the resulting N x (alpha*K) binary matrix. The converged
posteriors are the final (pre-mapping) probabilistic labels.

Bernoulli parameters are clipped away from {0, 1} after every M-step;
near-discrete input otherwise drives maximum-likelihood estimates to exact
0/1 and the log-density to -inf. Clipping is the exact maximizer over the
clipped family, so EM ascent is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from .config import EmControls
from .errors import ConfigError, DegenerateFitError
from .gmm import EMPTY_COMPONENT_WEIGHT, PRIOR_SUM_TOL, posteriors_from_log_joint


@dataclass(frozen=True, eq=False)
class BernoulliParams:
    """Mixture weights plus per-component Bernoulli success probabilities."""

    priors: np.ndarray   # (K,)
    b: np.ndarray        # (K, alpha*K), all entries in (0, 1)

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if b.ndim != 2 or priors.shape != (b.shape[0],):
            raise ConfigError(f"inconsistent parameter shapes: priors {priors.shape}, b {b.shape}")
        if abs(priors.sum() - 1.0) > PRIOR_SUM_TOL or priors.min() < 0.0:
            raise ConfigError("priors must form a probability simplex")
        if not np.all(np.isfinite(b)) or b.min() <= 0.0 or b.max() >= 1.0:
            raise ConfigError("Bernoulli parameters must lie strictly inside (0, 1)")
        priors.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "b", b)

    @property
    def n_components(self) -> int:
        return self.b.shape[0]

    def n_parameters(self) -> int:
        """K priors + K x (alpha*K) Bernoulli parameters."""
        return self.b.shape[0] * self.b.shape[1] + self.b.shape[0]


@dataclass(frozen=True, eq=False)
class EnsembleFitResult:
    params: BernoulliParams
    label_probs: np.ndarray          # (N, K) pre-mapping probabilistic labels
    trace: np.ndarray
    all_traces: tuple[np.ndarray, ...]
    converged: bool
    best_restart: int


def one_hot_concat(lps: list[np.ndarray]) -> np.ndarray:
    """Concatenate alpha label prediction matrices as one-hot blocks.

    Every input is (N, K); each row of each block gets a single 1 at its
    argmax column (ties to the lowest class index). Output is (N, alpha*K).
    """
    if not lps:
        raise ConfigError("need at least one label prediction matrix")
    shapes = {np.asarray(lp).shape for lp in lps}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2:
        raise ConfigError(f"label prediction matrices disagree in shape: {sorted(shapes)}")
    blocks = []
    for lp in lps:
        lp = np.asarray(lp)
        onehot = np.zeros_like(lp, dtype=np.float64)
        onehot[np.arange(lp.shape[0]), np.argmax(lp, axis=1)] = 1.0
        blocks.append(onehot)
    return np.concatenate(blocks, axis=1)


def validate_one_hot_blocks(concat: np.ndarray, n_classes: int) -> None:
    """Check the N x (alpha*K) block structure: binary, one 1 per K-wide block."""
    concat = np.asarray(concat)
    if concat.ndim != 2 or concat.shape[1] % n_classes != 0:
        raise ConfigError(
            f"concatenated matrix width {concat.shape} is not a multiple of K={n_classes}")
    if not np.isin(concat, (0.0, 1.0)).all():
        raise ConfigError("concatenated matrix must be binary")
    n_blocks = concat.shape[1] // n_classes
    sums = concat.reshape(concat.shape[0], n_blocks, n_classes).sum(axis=2)
    if not np.all(sums == 1.0):
        raise ConfigError("every K-wide block row must contain exactly one 1")


def bernoulli_log_density(row: np.ndarray, k: int, params: BernoulliParams) -> float:
    """Log-probability of one binary row under component k."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (params.b.shape[1],):
        raise ConfigError(f"row length {row.shape} does not match {params.b.shape[1]} dimensions")
    b = params.b[k]
    return float(xlogy(row, b).sum() + xlogy(1.0 - row, 1.0 - b).sum())


def _log_density_matrix(concat: np.ndarray, params: BernoulliParams) -> np.ndarray:
    """(N, K) log densities of every row under every component."""
    log_b = np.log(params.b)
    log_1mb = np.log1p(-params.b)
    return concat @ log_b.T + (1.0 - concat) @ log_1mb.T


def _log_joint(concat: np.ndarray, params: BernoulliParams) -> np.ndarray:
    return _log_density_matrix(concat, params) + np.log(params.priors)[None, :]


def log_likelihood(concat: np.ndarray, params: BernoulliParams) -> float:
    return float(logsumexp(_log_joint(concat, params), axis=1).sum())


def m_step_bernoulli(concat: np.ndarray, gamma: np.ndarray,
                     clip: float = 1e-4) -> BernoulliParams:
    """Responsibility-weighted Bernoulli means, clipped into [clip, 1-clip]."""
    gamma = np.asarray(gamma, dtype=np.float64)
    n = concat.shape[0]
    nk = gamma.sum(axis=0)
    weights = nk.copy()
    b = np.empty((gamma.shape[1], concat.shape[1]))
    empty = nk < EMPTY_COMPONENT_WEIGHT
    for j in range(gamma.shape[1]):
        if empty[j]:
            b[j] = concat.mean(axis=0)
            weights[j] = 1.0
        else:
            b[j] = gamma[:, j] @ concat / nk[j]
    np.clip(b, clip, 1.0 - clip, out=b)
    return BernoulliParams(priors=weights / weights.sum(), b=b)


def _vote_init(concat: np.ndarray, n_classes: int,
               rng: np.random.Generator) -> np.ndarray:
    """Responsibilities from the modal one-hot vote across blocks, plus noise."""
    n, width = concat.shape
    votes = concat.reshape(n, width // n_classes, n_classes).sum(axis=1)
    modal = np.argmax(votes, axis=1)
    gamma = np.full((n, n_classes), 0.2 / n_classes)
    gamma[np.arange(n), modal] += 0.8
    gamma += rng.uniform(0.0, 0.1, size=gamma.shape)
    return gamma / gamma.sum(axis=1, keepdims=True)


def fit_ensemble(concat: np.ndarray, n_classes: int,
                 controls: EmControls = EmControls(),
                 clip: float = 1e-4,
                 seed: int | tuple = 0) -> EnsembleFitResult:
    """Fit the Bernoulli mixture by EM; posteriors are the pre-mapping labels."""
    concat = np.asarray(concat, dtype=np.float64)
    validate_one_hot_blocks(concat, n_classes)
    if not np.all(np.isfinite(concat)):
        raise DegenerateFitError("concatenated matrix contains non-finite values")
    n = concat.shape[0]
    if n < n_classes:
        raise ConfigError(f"need N >= K, got N={n}, K={n_classes}")

    seed_key = seed if isinstance(seed, tuple) else (seed,)
    best = None
    traces: list[np.ndarray] = []
    for r in range(controls.restarts):
        rng = np.random.default_rng(np.random.SeedSequence((*seed_key, r)))
        params = m_step_bernoulli(concat, _vote_init(concat, n_classes, rng), clip)
        trace: list[float] = []
        gamma = None
        converged = False
        for t in range(controls.max_iter):
            gamma, ll = posteriors_from_log_joint(_log_joint(concat, params))
            trace.append(ll)
            if t > 0 and abs(ll - trace[-2]) <= controls.tol * abs(trace[-2]):
                converged = True
                break
            params = m_step_bernoulli(concat, gamma, clip)
        else:
            gamma, ll = posteriors_from_log_joint(_log_joint(concat, params))
            trace.append(ll)
        traces.append(np.array(trace))
        if best is None or trace[-1] > best[0]:
            best = (trace[-1], params, gamma, np.array(trace), converged, r)
    _, params, gamma, trace, converged, r = best
    return EnsembleFitResult(params=params, label_probs=gamma, trace=trace,
                             all_traces=tuple(traces), converged=converged, best_restart=r)
