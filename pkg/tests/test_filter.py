import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rmckf.config import BandwidthGrid, FilterConfig
from rmckf.exceptions import FilterError, RiskTooLarge
from rmckf.filter import FAMILY, RobustCorrentropyKalmanFilter, make_filter, run_filter

F = np.array([[1.0, 0.1], [0.0, 1.0]])
H = np.array([[1.0, 0.0]])
Q = 0.01 * np.eye(2)
R = np.array([[0.5]])


def measurements(rng, K=40, B=None):
    shape = (K, 1) if B is None else (B, K, 1)
    return np.cumsum(0.1 * np.ones(shape), axis=-2) + rng.standard_normal(shape)


def test_params_roundtrip():
    est = RobustCorrentropyKalmanFilter(F, H, Q, R, [0, 0], np.eye(2), mu1=0.01, sigma="select")
    p = est.get_params()
    assert p["mu1"] == 0.01 and p["sigma"] == "select"
    twin = clone(est)
    assert twin.get_params()["mu1"] == 0.01
    est.set_params(sigma=3.0)
    assert est.config().bandwidth == 3.0


def test_fit_transform_shapes(rng):
    Y = measurements(rng)
    est = RobustCorrentropyKalmanFilter(F, H, Q, R, [0, 0], np.eye(2), sigma=2.0)
    out = est.fit_transform(Y)
    assert out.shape == (40, 2) and est.covariances_.shape == (40, 2, 2)
    assert est.sigmas_.shape == (40,) and np.all(est.sigmas_ == 2.0)
    np.testing.assert_array_equal(est.transform(Y), out)
    flat = RobustCorrentropyKalmanFilter(F, H, Q, R, [0, 0], np.eye(2), sigma=2.0).fit(Y[:, 0])
    np.testing.assert_array_equal(flat.means_, out)


def test_batch_matches_single(rng):
    Y = measurements(rng, B=3)
    est = RobustCorrentropyKalmanFilter(F, H, Q, R, [0, 0], np.eye(2), sigma="select",
                                        sigma_grid=BandwidthGrid.logspace(0.5, 20, 6))
    batch = est.fit(Y).means_.copy()
    for b in range(3):
        np.testing.assert_allclose(est.fit(Y[b]).means_, batch[b], rtol=1e-12, atol=1e-12)


def test_not_fitted_and_bad_input(rng):
    est = RobustCorrentropyKalmanFilter(F, H, Q, R, [0, 0], np.eye(2))
    with pytest.raises(NotFittedError):
        est.transform(np.zeros((3, 1)))
    for bad in (np.zeros((3, 2)), np.zeros((0, 1)), np.full((3, 1), np.nan), np.zeros((2, 2, 2, 1))):
        with pytest.raises(ValueError):
            est.fit(bad)
    with pytest.raises(ValueError):
        RobustCorrentropyKalmanFilter(F, H, Q, R, [0, 0], np.eye(2), sigma="auto").fit(np.zeros((3, 1)))
    with pytest.raises(ValueError):
        RobustCorrentropyKalmanFilter(F, H, Q, np.eye(2), [0, 0], np.eye(2)).fit(np.zeros((3, 1)))


def test_single_sequence_failure_raises():
    est = RobustCorrentropyKalmanFilter(F, H, Q, R, [0, 0], np.eye(2), mu1=10.0)
    with pytest.raises(RiskTooLarge):
        est.fit(np.zeros((5, 1)))


def test_batch_failure_is_isolated(rng):
    Y = measurements(rng, K=10, B=3)
    Y[1, 4] = 1e6
    run = run_filter(Y, F, H, Q, R, [0, 0], np.eye(2), FilterConfig(bandwidth=1.0))
    assert run.failed.tolist() == [False, True, False]
    assert run.failure[1].k == 5 and run.failure[0] is None
    assert np.isnan(run.means[1]).all() and np.isfinite(run.means[[0, 2]]).all()


def test_halving_records_events():
    cfg = FilterConfig(mu1=10.0, on_risk="halve")
    run = run_filter(np.zeros((1, 5, 1)), F, H, Q, R, [0, 0], np.eye(2), cfg)
    assert not run.failed[0]
    assert run.halvings[0, 0] > 0 and run.mu1[0, 0] < 10.0
    cap = FilterConfig(mu1=10.0, on_risk="halve", risk_ceiling=0.01)
    capped = run_filter(np.zeros((1, 5, 1)), F, H, Q, R, [0, 0], np.eye(2), cap)
    lam = np.linalg.eigvalsh(np.concatenate([np.eye(2)[None], capped.covariances[0, :-1]]))[:, -1]
    assert np.all(2 * capped.mu1[0] * lam < 0.01)


def test_make_filter_family():
    assert set(FAMILY) == {"kf", "rskf", "mckf", "rmckf-fk", "mckf-sk", "rmckf-sk"}
    args = (F, H, Q, R, [0, 0], np.eye(2))
    assert make_filter("kf", *args).config().bandwidth == np.inf
    assert make_filter("kf", *args, mu1=0.5).mu1 == 0.0
    assert make_filter("rskf", *args, mu1=0.5).mu1 == 0.5
    assert make_filter("mckf", *args, sigma=3.0).config().bandwidth == 3.0
    assert make_filter("rmckf-sk", *args).config().selects_bandwidth
    with pytest.raises(ValueError):
        make_filter("ukf", *args)


def test_record_candidates(rng):
    Y = measurements(rng, K=8)
    est = RobustCorrentropyKalmanFilter(F, H, Q, R, [0, 0], np.eye(2), sigma="select",
                                        sigma_grid=BandwidthGrid([1.0, 2.0, 4.0]),
                                        record_candidates=True).fit(Y)
    assert est.run_.candidate_jkb.shape == (1, 8, 3)


@pytest.mark.parametrize("kw", [dict(mu1=-1), dict(mu2=0), dict(epsilon=0), dict(t_max=0),
                                dict(bandwidth=-1.0), dict(on_risk="ignore"), dict(risk_ceiling=1.5)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        FilterConfig(**kw)


def test_filter_error_carries_index():
    err = FilterError("boom").at(3)
    assert err.k == 3 and "k=3" in str(err)
