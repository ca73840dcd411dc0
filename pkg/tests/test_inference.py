import numpy as np
import pytest

from core.errors import BootstrapError
from models.schemas import BaselineKind, BaselineVariant, Coefficients, FitResult
from services.inference import MAX_ATTEMPTS, bootstrap_se, detect_confounding, stratified_subsample
from tests.conftest import make_dataset


def _mean_fit(sub, seed):
    return np.array([sub.log_time.mean(), sub.covariates[:, 0].mean()])


def test_constant_fit_has_zero_se(dataset):
    point = np.array([1.0, -2.0])
    result = bootstrap_se(dataset, lambda sub, seed: point.copy(), point, B=2, level=0.95, seed=1, threads=1)
    np.testing.assert_array_equal(result.se, np.zeros(2))
    np.testing.assert_array_equal(result.ci_lower, point)
    np.testing.assert_array_equal(result.ci_upper, point)
    assert result.attempts == 2


def test_subsample_size_and_confidence_interval(dataset):
    point = _mean_fit(dataset, 0)
    result = bootstrap_se(dataset, _mean_fit, point, B=20, level=0.9, seed=3, threads=2, keep_replicates=True)
    assert result.subsample_size == round(0.632 * dataset.n)
    assert result.replicate_matrix.shape == (20, 2)
    np.testing.assert_allclose(result.ci_upper - result.point, 1.6448536269514722 * result.se)


def test_rescaling_of_replicate_spread(dataset):
    point = _mean_fit(dataset, 0)
    raw = bootstrap_se(dataset, _mean_fit, point, B=10, seed=4, rescale=False, threads=1)
    scaled = bootstrap_se(dataset, _mean_fit, point, B=10, seed=4, rescale=True, threads=1)
    m = raw.subsample_size
    np.testing.assert_allclose(scaled.se, raw.se * np.sqrt(m / (dataset.n - m)))


def test_same_seed_same_result(dataset):
    point = _mean_fit(dataset, 0)
    first = bootstrap_se(dataset, _mean_fit, point, B=8, seed=11, threads=1)
    second = bootstrap_se(dataset, _mean_fit, point, B=8, seed=11, threads=4)
    np.testing.assert_array_equal(first.se, second.se)


def test_failed_attempts_are_retried(dataset):
    calls = {"n": 0}

    def flaky(sub, seed):
        calls["n"] += 1
        if calls["n"] == 1:
            raise ValueError("estrato degenerado")
        return np.zeros(1)

    result = bootstrap_se(dataset, flaky, np.zeros(1), B=2, seed=0, threads=1)
    assert result.attempts == 3


def test_exhausted_replicate_fails(dataset):
    def broken(sub, seed):
        raise ValueError("siempre falla")

    with pytest.raises(BootstrapError, match=str(MAX_ATTEMPTS)):
        bootstrap_se(dataset, broken, np.zeros(1), B=2, seed=0, threads=1)


def test_invalid_arguments(dataset):
    with pytest.raises(BootstrapError):
        bootstrap_se(dataset, _mean_fit, np.zeros(2), B=1)
    with pytest.raises(BootstrapError):
        bootstrap_se(dataset, _mean_fit, np.zeros(2), B=5, level=1.0)


def test_stratified_subsample_keeps_source_share(rng):
    d = make_dataset(rng, n=500, rct_share=0.2)
    idx = stratified_subsample(d, 316, rng)
    assert idx.size == 316
    assert np.unique(idx).size == 316
    share = d.source[idx].mean()
    assert abs(share - d.source.mean()) < 0.01


def _fit_with_beta(beta):
    alpha = np.zeros(3)
    beta = None if beta is None else np.asarray(beta, dtype=float)
    theta = alpha if beta is None else np.concatenate([alpha, beta])
    return FitResult(
        label="RL.cv",
        variant=BaselineVariant(kind=BaselineKind.RL),
        coefficients=Coefficients(alpha=alpha, beta=beta, theta_std=theta, objective=0.0, iterations=1, converged=True),
        support_alpha=(),
        n_used=10,
    )


def test_detect_confounding():
    assert not detect_confounding(_fit_with_beta(None)).confounded
    assert not detect_confounding(_fit_with_beta([0.0, 0.0, 0.0])).confounded

    intercept_only = _fit_with_beta([0.7, 0.0, 0.0])
    assert not detect_confounding(intercept_only).confounded
    assert detect_confounding(intercept_only, include_intercept=True).support_beta == (0,)

    verdict = detect_confounding(_fit_with_beta([0.0, 0.0, -1.2]))
    assert verdict.confounded
    assert verdict.support_beta == (2,)
