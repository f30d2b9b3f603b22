import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from crossflow import DiscreteHawkes
from crossflow.estimator import check_counts, check_random_seed
from crossflow.hawkes import simulate

from conftest import make_params


def small_model(**kw):
    base = dict(max_lag=8, lag_edges=(1, 2, 4, 9), burn_in=10, n_samples=20, random_state=0)
    base.update(kw)
    return DiscreteHawkes(**base)


@pytest.fixture(scope="module")
def counts():
    from crossflow.hawkes import LagKernelGrid
    p = make_params([0.05, 0.03], [[0.3, 0.1], [0.2, 0.2]], grid=LagKernelGrid((1, 2, 4, 9)))
    return simulate(p, 2000, 7).counts


def test_get_params_roundtrip():
    est = small_model(weight_prior=(2.0, 3.0))
    params = est.get_params()
    assert params["weight_prior"] == (2.0, 3.0)
    assert params["max_lag"] == 8
    c = clone(est)
    assert c.get_params() == params
    c.set_params(burn_in=5)
    assert c.burn_in == 5 and est.burn_in == 10


def test_default_schedule():
    est = DiscreteHawkes()
    assert (est.max_lag, est.burn_in, est.n_samples, est.thin) == (720, 200, 500, 1)


def test_fit_attributes(counts):
    est = small_model().fit(counts)
    assert est.n_features_in_ == 2
    assert est.lambda0_.shape == (2,)
    assert est.W_.shape == (2, 2) and est.W_sd_.shape == (2, 2)
    assert est.G_.shape == (2, 2, 3)
    np.testing.assert_allclose(est.G_.sum(axis=-1), 1.0, atol=1e-12)
    assert est.posterior_.n_samples == 20


def test_fit_deterministic(counts):
    a = small_model().fit(counts)
    b = small_model().fit(counts)
    assert np.array_equal(a.W_, b.W_)
    c = small_model(random_state=1).fit(counts)
    assert not np.array_equal(a.W_, c.W_)


def test_score_and_intensity(counts):
    est = small_model().fit(counts)
    rates = est.intensity(counts)
    assert rates.shape == counts.shape and np.all(rates > 0)
    ll = est.score(counts)
    assert np.isfinite(ll) and ll < 0


def test_sample_shape(counts):
    est = small_model().fit(counts)
    s = est.sample(300, random_state=3)
    assert s.shape == (300, 2)
    assert np.array_equal(s, est.sample(300, random_state=3))


def test_not_fitted():
    with pytest.raises(NotFittedError):
        small_model().score(np.zeros((5, 2), dtype=int))


def test_feature_mismatch(counts):
    est = small_model().fit(counts)
    with pytest.raises(ValueError, match="columns"):
        est.score(np.zeros((10, 3), dtype=int))


def test_bad_edges():
    with pytest.raises(ValueError, match="max_lag"):
        small_model(max_lag=10).fit(np.zeros((20, 1), dtype=int))


@pytest.mark.parametrize("X, msg", [
    (np.zeros(5), "2-D"),
    (np.zeros((0, 2)), "non-empty"),
    (np.array([[1.5, 0.0]]), "integers"),
    (np.array([[-1, 0]]), "non-negative"),
    (np.array([[np.nan, 0.0]]), "integers"),
])
def test_check_counts_rejects(X, msg):
    with pytest.raises(ValueError, match=msg):
        check_counts(X)


def test_check_counts_accepts_integral_floats():
    out = check_counts(np.array([[1.0, 0.0], [2.0, 3.0]]))
    assert out.dtype == np.int64 and out.tolist() == [[1, 0], [2, 3]]


def test_check_random_seed():
    assert check_random_seed(None) is None
    assert check_random_seed(5) == 5
    with pytest.raises(ValueError):
        check_random_seed(np.random.default_rng(0))
