"""Diagonal-Gaussian EM: oracles, ascent, equivariance, degenerate paths."""

import math

import numpy as np
import pytest

from afflabel.config import EmControls
from afflabel.errors import ConfigError, DegenerateFitError
from afflabel.gmm import (GmmParams, e_step, fit_base_model, gaussian_log_density,
                          log_likelihood, m_step_gaussian)


def weighted_moments_oracle(data, gamma, var_floor):
    """Independent weighted-moment computation with plain Python loops."""
    n, d = data.shape
    k = gamma.shape[1]
    priors = np.zeros(k)
    means = np.zeros((k, d))
    variances = np.zeros((k, d))
    for j in range(k):
        nk = sum(gamma[i, j] for i in range(n))
        priors[j] = nk / n
        for dim in range(d):
            means[j, dim] = sum(gamma[i, j] * data[i, dim] for i in range(n)) / nk
            variances[j, dim] = max(
                sum(gamma[i, j] * (data[i, dim] - means[j, dim]) ** 2 for i in range(n)) / nk,
                var_floor)
    return priors, means, variances


def params_1d(means, variances, priors=None):
    k = len(means)
    priors = priors if priors is not None else np.full(k, 1.0 / k)
    return GmmParams(priors=np.asarray(priors, dtype=float),
                     means=np.asarray(means, dtype=float).reshape(k, 1),
                     variances=np.asarray(variances, dtype=float).reshape(k, 1))


def test_e_step_single_component_is_ones():
    params = params_1d([0.0], [1.0], [1.0])
    gamma = e_step(np.array([[0.3], [5.0], [-2.0]]), params)
    np.testing.assert_array_equal(gamma, np.ones((3, 1)))


def test_e_step_separated_components():
    params = params_1d([-10.0, 10.0], [1.0, 1.0])
    gamma = e_step(np.array([[-10.0]]), params)
    # density ratio oracle: log-odds = -0.5*(0^2 - 20^2) = 200
    expected = 1.0 / (1.0 + math.exp(-200.0))
    assert gamma[0, 0] == pytest.approx(expected, abs=1e-8)
    assert gamma[0, 0] > 1.0 - 1e-8
    assert gamma[0, 1] < 1e-8


def test_e_step_equidistant_point_splits_evenly():
    params = params_1d([-3.0, 3.0], [2.0, 2.0])
    gamma = e_step(np.array([[0.0]]), params)
    np.testing.assert_allclose(gamma[0], [0.5, 0.5], atol=1e-12)


def test_e_step_matches_direct_bayes_rule():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(6, 3))
    params = GmmParams(priors=np.array([0.3, 0.7]),
                       means=rng.normal(size=(2, 3)),
                       variances=rng.uniform(0.5, 2.0, size=(2, 3)))
    gamma = e_step(data, params)
    dens = np.exp(gaussian_log_density(data, params))
    joint = dens * params.priors
    np.testing.assert_allclose(gamma, joint / joint.sum(axis=1, keepdims=True), atol=1e-12)


def test_m_step_two_point_moments():
    data = np.array([[0.0], [2.0]])
    gamma = np.array([[1.0, 0.0], [1.0, 0.0]])
    params = m_step_gaussian(data, gamma, var_floor=1e-6)
    assert params.means[0, 0] == pytest.approx(1.0)
    assert params.variances[0, 0] == pytest.approx(1.0)


def test_m_step_uniform_gamma_gives_global_mean():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(10, 4))
    gamma = np.full((10, 3), 1.0 / 3.0)
    params = m_step_gaussian(data, gamma)
    for j in range(3):
        np.testing.assert_allclose(params.means[j], data.mean(axis=0), atol=1e-12)


def test_m_step_matches_weighted_moments_oracle():
    rng = np.random.default_rng(2)
    data = rng.normal(size=(5, 3))
    gamma = rng.dirichlet(np.ones(2), size=5)
    params = m_step_gaussian(data, gamma, var_floor=1e-6)
    priors, means, variances = weighted_moments_oracle(data, gamma, 1e-6)
    np.testing.assert_allclose(params.priors, priors, atol=1e-12)
    np.testing.assert_allclose(params.means, means, atol=1e-12)
    np.testing.assert_allclose(params.variances, variances, atol=1e-12)


def test_m_step_reseeds_empty_component():
    data = np.array([[0.0, 0.0], [1.0, 1.0], [4.0, 4.0]])
    gamma = np.zeros((3, 2))
    gamma[:, 0] = 1.0  # component 1 gets nothing
    params = m_step_gaussian(data, gamma)
    assert params.n_components == 2
    assert params.priors.min() > 0.0
    assert np.all(np.isfinite(params.means)) and np.all(params.variances > 0)


def planted_rows(seed, n=40, d=12, gap=8.0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    centers = np.stack([np.zeros(d), np.full(d, gap / math.sqrt(d))])
    data = centers[labels] + rng.normal(scale=1.0, size=(n, d))
    return data, labels


def test_fit_recovers_planted_blocks():
    data, labels = planted_rows(seed=3)
    fit = fit_base_model(data, 2, EmControls(restarts=3), seed=3)
    hard = fit.label_probs.argmax(axis=1)
    agreement = max(np.mean(hard == labels), np.mean(hard == 1 - labels))
    assert agreement >= 0.99


def test_fit_trace_is_non_decreasing():
    data, _ = planted_rows(seed=4)
    fit = fit_base_model(data, 2, EmControls(restarts=3), seed=4)
    for trace in fit.all_traces:
        diffs = np.diff(trace)
        floor = -1e-9 * np.abs(trace[:-1])
        assert np.all(diffs >= floor)


def test_fit_final_trace_matches_returned_params():
    data, _ = planted_rows(seed=5)
    fit = fit_base_model(data, 2, seed=5)
    assert fit.trace[-1] == pytest.approx(log_likelihood(data, fit.params), rel=1e-12)


def test_duplicate_rows_get_identical_label_rows():
    rng = np.random.default_rng(6)
    data = rng.normal(size=(12, 6))
    data[7] = data[2]
    fit = fit_base_model(data, 2, seed=6)
    np.testing.assert_array_equal(fit.label_probs[2], fit.label_probs[7])


def test_label_rows_on_simplex():
    data, _ = planted_rows(seed=7)
    fit = fit_base_model(data, 3, seed=7)
    np.testing.assert_allclose(fit.label_probs.sum(axis=1), 1.0, atol=1e-9)
    assert fit.label_probs.min() >= 0.0


def test_parameter_count_arithmetic():
    for k, d in [(2, 10), (3, 50), (4, 7)]:
        params = GmmParams(priors=np.full(k, 1.0 / k),
                           means=np.zeros((k, d)),
                           variances=np.ones((k, d)))
        assert params.n_parameters() == 2 * k * d + k


def test_component_permutation_permutes_label_columns():
    data, _ = planted_rows(seed=8)
    fit = fit_base_model(data, 3, seed=8)
    perm = [2, 0, 1]
    permuted = GmmParams(priors=fit.params.priors[perm],
                         means=fit.params.means[perm],
                         variances=fit.params.variances[perm])
    gamma = e_step(data, permuted)
    np.testing.assert_allclose(gamma, fit.label_probs[:, perm], atol=1e-12)


def test_determinism_per_seed():
    data, _ = planted_rows(seed=9)
    a = fit_base_model(data, 2, seed=(42, 3))
    b = fit_base_model(data, 2, seed=(42, 3))
    np.testing.assert_array_equal(a.label_probs, b.label_probs)
    c = fit_base_model(data, 2, seed=(42, 4))
    assert not np.array_equal(a.params.means, c.params.means)


def test_configuration_errors():
    with pytest.raises(ConfigError, match="N >= K"):
        fit_base_model(np.zeros((2, 3)), 3)
    with pytest.raises(DegenerateFitError, match="non-finite"):
        fit_base_model(np.array([[np.nan, 1.0], [0.0, 1.0]]), 1)
    with pytest.raises(ConfigError):
        GmmParams(priors=np.array([0.5, 0.6]), means=np.zeros((2, 1)),
                  variances=np.ones((2, 1)))
