import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmckf.noise import GaussianMixture, equivalent_covariance, gaussian_kernel, sample, sample_correntropy

from conftest import spd_matrices


def test_equivalent_covariance_examples():
    assert equivalent_covariance(GaussianMixture.scalar([(0.8, 1), (0.2, 1000)]))[0, 0] == pytest.approx(200.8, rel=1e-14)
    assert equivalent_covariance(GaussianMixture.scalar([(0.8, 0.01), (0.2, 1)]))[0, 0] == pytest.approx(0.208, rel=1e-14)
    Q = np.array([[2.0, 0.3], [0.3, 1.0]])
    np.testing.assert_array_equal(equivalent_covariance(GaussianMixture([1.0], [Q])), Q)


@pytest.mark.parametrize("weights,covs", [
    ([0.5, 0.6], [[[1.0]], [[2.0]]]),          # weights do not sum to 1
    ([1.5, -0.5], [[[1.0]], [[2.0]]]),         # weight outside [0, 1]
    ([1.0], [[[0.0]]]),                        # singular
    ([1.0], [[[1.0, 0.2], [0.3, 1.0]]]),       # not symmetric
    ([1.0], [[[1.0, 2.0], [2.0, 1.0]]]),       # indefinite
])
def test_invalid_mixtures_rejected(weights, covs):
    with pytest.raises(ValueError):
        GaussianMixture(weights, covs)


def test_nonzero_means_rejected():
    with pytest.raises(ValueError):
        GaussianMixture([1.0], [[[1.0]]], means=[[0.5]])


def test_sample_reproducible():
    mix = GaussianMixture.scalar([(1.0, 1.0)])
    a = sample(mix, np.random.default_rng(7), size=5)
    b = sample(mix, np.random.default_rng(7), size=5)
    np.testing.assert_array_equal(a, b)
    assert sample(mix, np.random.default_rng(7)).shape == (1,)


def test_sample_variance_matches_equivalent_covariance():
    mix = GaussianMixture.scalar([(0.8, 0.01), (0.2, 1.0)])
    draws = sample(mix, np.random.default_rng(2024), size=100_000)
    assert draws.var() == pytest.approx(0.208, rel=0.05)


def test_multivariate_empirical_covariance():
    mix = GaussianMixture([0.7, 0.3], [np.diag([1.0, 2.0]), [[4.0, 1.0], [1.0, 3.0]]])
    draws = sample(mix, np.random.default_rng(5), size=200_000)
    emp = draws.T @ draws / len(draws)
    eq = equivalent_covariance(mix)
    assert np.all(np.abs(emp - eq) <= 0.05 * np.abs(eq).max())


def test_independent_product_mixture():
    q = GaussianMixture.scalar([(0.9, 0.0005), (0.1, 0.05)])
    prod = GaussianMixture.independent(q, 3)
    assert prod.n_components == 8
    np.testing.assert_allclose(equivalent_covariance(prod), 0.00545 * np.eye(3), rtol=1e-12)


def test_gaussian_kernel_examples():
    assert gaussian_kernel(0.0, 1.0) == 1.0
    assert gaussian_kernel(np.sqrt(2.0) * 3.0, 3.0) == pytest.approx(np.exp(-1.0), rel=1e-14)
    assert gaussian_kernel(1.0, np.inf) == 1.0
    vals = gaussian_kernel(1.0, np.array([1.0, 10.0, 100.0, 1e4]))
    assert np.all(np.diff(vals) > 0) and vals[-1] == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        gaussian_kernel(1.0, 0.0)


def test_sample_correntropy_examples():
    assert sample_correntropy([0.0, 0.0, 0.0], 1.0) == 1.0
    assert sample_correntropy([0.0, 2.0], 1.0) == pytest.approx((1 + np.exp(-2)) / 2, rel=1e-14)
    assert sample_correntropy([0.0, 2.0], 1.0) == pytest.approx(0.56767, abs=1e-5)
    with pytest.raises(ValueError):
        sample_correntropy([], 1.0)


def test_kernel_matches_even_moment_series():
    # truncated series of the exponential, N = 0..6
    from math import factorial
    sigma = 1.3
    for e in np.linspace(-0.5 * sigma, 0.5 * sigma, 41):
        series = sum((-1) ** N * e ** (2 * N) / (2**N * sigma ** (2 * N) * factorial(N)) for N in range(7))
        assert abs(series - gaussian_kernel(e, sigma)) < 1e-6


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0.01, 100))
def test_kernel_decreasing_in_error(a, b, sigma):
    lo, hi = sorted((a, b))
    if hi - lo > 1e-6 * sigma and hi / sigma < 30:
        assert gaussian_kernel(hi, sigma) < gaussian_kernel(lo, sigma)


@given(st.floats(0.01, 10).filter(lambda e: e != 0), st.floats(0.1, 100), st.floats(1.01, 10))
def test_kernel_increasing_in_sigma(e, sigma, factor):
    if e / sigma < 30:
        assert gaussian_kernel(e, sigma * factor) > gaussian_kernel(e, sigma)


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=20), st.floats(0.1, 10))
def test_correntropy_range(errors, sigma):
    # keep exp(-e^2 / 2 sigma^2) inside double range
    errors = [e for e in errors if abs(e) < 30 * sigma] or [0.0]
    v = sample_correntropy(errors, sigma)
    assert 0 < v <= 1
    if all(e == 0 for e in errors):
        assert v == 1
    elif max(abs(e) for e in errors) > 1e-6 * sigma:
        assert v < 1


@settings(max_examples=50)
@given(st.lists(spd_matrices(n=2), min_size=1, max_size=4), st.data())
def test_equivalent_covariance_spd(covs, data):
    raw = data.draw(st.lists(st.floats(0.05, 1.0), min_size=len(covs), max_size=len(covs)))
    w = np.array(raw) / sum(raw)
    w[-1] = 1.0 - w[:-1].sum()
    mix = GaussianMixture(w, covs)
    eq = equivalent_covariance(mix)
    np.testing.assert_array_equal(eq, eq.T)
    assert np.linalg.eigvalsh(eq)[0] > 0
