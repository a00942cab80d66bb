"""Diagonal-covariance Gaussian mixtures fitted by EM.

One mixture is fitted per affinity function on that function's N x N score
block, treating each row as a D=N feature vector. The posterior matrix of
the converged fit is the function's label prediction matrix (N x K rows on
the simplex). All densities are evaluated in log-space; the M-step floors
every variance, which keeps each update the exact maximizer over the
floored family and so preserves EM's ascent property.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .config import EmControls
from .errors import ConfigError, DegenerateFitError

PRIOR_SUM_TOL = 1e-9
EMPTY_COMPONENT_WEIGHT = 1e-8

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class GmmParams:
    """Mixture weights plus per-component mean and diagonal-variance vectors."""

    priors: np.ndarray      # (K,)
    means: np.ndarray       # (K, D)
    variances: np.ndarray   # (K, D)

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        if means.shape != variances.shape or priors.shape != (means.shape[0],):
            raise ConfigError(
                f"inconsistent parameter shapes: priors {priors.shape}, "
                f"means {means.shape}, variances {variances.shape}")
        if abs(priors.sum() - 1.0) > PRIOR_SUM_TOL or priors.min() < 0.0:
            raise ConfigError("priors must form a probability simplex")
        if variances.min() <= 0.0:
            raise ConfigError("variances must be strictly positive")
        for name, arr in (("priors", priors), ("means", means), ("variances", variances)):
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} contain non-finite values")
            arr.flags.writeable = False
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def n_parameters(self) -> int:
        """K priors + K mean vectors + K diagonal-variance vectors."""
        k, d = self.means.shape
        return 2 * k * d + k


@dataclass(frozen=True, eq=False)
class FitResult:
    """Converged parameters, label predictions, and per-restart likelihood traces."""

    params: GmmParams
    label_probs: np.ndarray          # (N, K), rows on the simplex
    trace: np.ndarray                # log-likelihood per iteration of best restart
    all_traces: tuple[np.ndarray, ...]
    converged: bool
    best_restart: int


def gaussian_log_density(data: np.ndarray, params: GmmParams) -> np.ndarray:
    """(N, K) log densities of each row under each diagonal Gaussian."""
    data = np.asarray(data, dtype=np.float64)
    n, d = data.shape
    k = params.n_components
    out = np.empty((n, k))
    for j in range(k):
        var = params.variances[j]
        diff2 = (data - params.means[j]) ** 2
        out[:, j] = -0.5 * (d * LOG_2PI + np.log(var).sum() + (diff2 / var).sum(axis=1))
    return out


def _log_joint(data: np.ndarray, params: GmmParams) -> np.ndarray:
    return gaussian_log_density(data, params) + np.log(params.priors)[None, :]


def posteriors_from_log_joint(log_joint: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalize rows of log pi_k + log p(s_i | theta_k) into posteriors.

    Returns (gamma, total log-likelihood). Raises DegenerateFitError when a
    row cannot be normalized, which after log-space evaluation only happens
    for non-finite input.
    """
    row_ll = logsumexp(log_joint, axis=1)
    if not np.all(np.isfinite(row_ll)):
        raise DegenerateFitError("posterior normalization failed on a non-finite row")
    gamma = np.exp(log_joint - row_ll[:, None])
    return gamma, float(row_ll.sum())


def e_step(data: np.ndarray, params: GmmParams) -> np.ndarray:
    """Posterior responsibilities gamma[i, k] = P(y_i = k | s_i)."""
    gamma, _ = posteriors_from_log_joint(_log_joint(data, params))
    return gamma


def log_likelihood(data: np.ndarray, params: GmmParams) -> float:
    return float(logsumexp(_log_joint(data, params), axis=1).sum())


def m_step_gaussian(data: np.ndarray, gamma: np.ndarray,
                    var_floor: float = 1e-6) -> GmmParams:
    """Weighted-moment update of priors, means, and diagonal variances.

    A component whose total responsibility falls below a tiny threshold is
    re-seeded at the data point with the lowest max-responsibility (the worst
    explained point) with global variance, instead of raising.
    """
    data = np.asarray(data, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    n, d = data.shape
    k = gamma.shape[1]
    if gamma.shape[0] != n:
        raise ConfigError(f"gamma rows {gamma.shape[0]} != data rows {n}")

    nk = gamma.sum(axis=0)
    means = np.empty((k, d))
    variances = np.empty((k, d))
    weights = nk.copy()
    empty = nk < EMPTY_COMPONENT_WEIGHT
    if np.any(empty):
        global_var = np.maximum(data.var(axis=0), var_floor)
        worst = int(np.argmin(gamma.max(axis=1)))
    for j in range(k):
        if empty[j]:
            means[j] = data[worst]
            variances[j] = global_var
            weights[j] = 1.0
            continue
        means[j] = gamma[:, j] @ data / nk[j]
        variances[j] = np.maximum(gamma[:, j] @ (data - means[j]) ** 2 / nk[j], var_floor)
    return GmmParams(priors=weights / weights.sum(), means=means, variances=variances)


def _farthest_point_rows(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """K row indices: a random start, then greedy max-min Euclidean distance."""
    n = data.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((data - data[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((data - data[nxt]) ** 2).sum(axis=1))
    return np.array(chosen, dtype=np.intp)


def _init_params(data: np.ndarray, k: int, var_floor: float,
                 rng: np.random.Generator) -> GmmParams:
    seeds = _farthest_point_rows(data, k, rng)
    dists = ((data[:, None, :] - data[seeds][None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(dists, axis=1)
    gamma = np.zeros((data.shape[0], k))
    gamma[np.arange(data.shape[0]), assign] = 1.0
    return m_step_gaussian(data, gamma, var_floor)


def _run_em(data: np.ndarray, params: GmmParams, controls: EmControls,
            var_floor: float) -> tuple[GmmParams, np.ndarray, list[float], bool]:
    trace: list[float] = []
    gamma = None
    converged = False
    for t in range(controls.max_iter):
        gamma, ll = posteriors_from_log_joint(_log_joint(data, params))
        trace.append(ll)
        if t > 0 and abs(ll - trace[-2]) <= controls.tol * abs(trace[-2]):
            converged = True
            break
        params = m_step_gaussian(data, gamma, var_floor)
    else:
        # align the returned posteriors with the last M-step's parameters
        gamma, ll = posteriors_from_log_joint(_log_joint(data, params))
        trace.append(ll)
    return params, gamma, trace, converged


def fit_base_model(data: np.ndarray, n_components: int,
                   controls: EmControls = EmControls(),
                   var_floor: float = 1e-6,
                   seed: int | tuple = 0) -> FitResult:
    """Fit one diagonal-Gaussian mixture by EM with restarts.

    Each restart seeds responsibilities from K rows chosen by a
    farthest-point sweep, takes one M-step, then alternates E/M until the
    relative log-likelihood change drops below ``controls.tol``. The restart
    with the best final likelihood wins; its posteriors are the label
    prediction matrix.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ConfigError(f"data must be 2-D, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise DegenerateFitError("data contains non-finite values")
    n = data.shape[0]
    if n_components < 1 or n < n_components:
        raise ConfigError(f"need N >= K >= 1, got N={n}, K={n_components}")

    seed_key = seed if isinstance(seed, tuple) else (seed,)
    best = None
    traces: list[np.ndarray] = []
    for r in range(controls.restarts):
        rng = np.random.default_rng(np.random.SeedSequence((*seed_key, r)))
        params0 = _init_params(data, n_components, var_floor, rng)
        params, gamma, trace, converged = _run_em(data, params0, controls, var_floor)
        traces.append(np.array(trace))
        if best is None or trace[-1] > best[0]:
            best = (trace[-1], params, gamma, np.array(trace), converged, r)
    _, params, gamma, trace, converged, r = best
    return FitResult(params=params, label_probs=gamma, trace=trace,
                     all_traces=tuple(traces), converged=converged, best_restart=r)
