"""
scikit-learn style front end for the Gibbs-fitted Hawkes model.
"""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .events import BinnedCounts
from .gibbs import GibbsSchedule, Priors, fit
from .hawkes import HawkesParams, LagKernelGrid, compute_rates, log_likelihood, simulate


def check_counts(X, n_features=None) -> np.ndarray:
    """Validate a T x K event-count matrix and return it as int64."""
    if isinstance(X, BinnedCounts):
        X = X.counts
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D count matrix, got {X.ndim}-D input")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"count matrix must be non-empty, got shape {X.shape}")
    if X.dtype.kind not in "iub":
        if X.dtype.kind != "f" or not np.all(np.isfinite(X)) or np.any(X != np.round(X)):
            raise ValueError("count matrix must hold integers")
    if np.any(X < 0):
        raise ValueError("count matrix must be non-negative")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} columns, estimator was fitted with {n_features}")
    return X.astype(np.int64)


def check_random_seed(random_state):
    if random_state is None or isinstance(random_state, (numbers.Integral, np.random.SeedSequence)):
        return random_state
    raise ValueError("random_state must be None, an int or a SeedSequence")


class DiscreteHawkes(BaseEstimator):
    """Discrete-time multivariate Hawkes process fitted by Gibbs sampling.

    Parameters
    ----------
    max_lag : int, default=720
        Longest lag (in bins) through which an event can excite others.
    lag_edges : sequence of int, optional
        Lag-bin edges; defaults to log-spaced bins over 1..max_lag.
    lambda0_prior : (shape, rate), default=(1.0, 1.0)
    weight_prior : (shape, rate), default=(0.05, 3.0)
    lag_concentration : float, default=2.0
        Total Dirichlet concentration, split evenly over the lag bins.
    burn_in, n_samples, thin : int
        Sweep schedule.
    random_state : int, optional

    Attributes
    ----------
    lambda0_, W_, G_ : posterior means
    lambda0_sd_, W_sd_ : posterior standard deviations
    posterior_ : PosteriorSummary
    params_ : HawkesParams at the posterior mean
    n_features_in_ : int
    """

    def __init__(self, max_lag=720, lag_edges=None, lambda0_prior=(1.0, 1.0),
                 weight_prior=(0.05, 3.0), lag_concentration=2.0, burn_in=200,
                 n_samples=500, thin=1, random_state=None):
        self.max_lag = max_lag
        self.lag_edges = lag_edges
        self.lambda0_prior = lambda0_prior
        self.weight_prior = weight_prior
        self.lag_concentration = lag_concentration
        self.burn_in = burn_in
        self.n_samples = n_samples
        self.thin = thin
        self.random_state = random_state

    def _grid(self) -> LagKernelGrid:
        if self.lag_edges is None:
            return LagKernelGrid.default(self.max_lag)
        grid = LagKernelGrid(tuple(self.lag_edges))
        if grid.max_lag != self.max_lag:
            raise ValueError(f"lag_edges cover 1..{grid.max_lag}, max_lag is {self.max_lag}")
        return grid

    def _priors(self) -> Priors:
        return Priors(*self.lambda0_prior, *self.weight_prior, self.lag_concentration)

    def fit(self, X, y=None):
        """Fit to a T x K count matrix (rows = time bins)."""
        X = check_counts(X)
        seed = check_random_seed(self.random_state)
        grid = self._grid()
        schedule = GibbsSchedule(self.burn_in, self.n_samples, self.thin)
        post = fit(X, self._priors(), schedule, seed=seed, grid=grid)
        self.posterior_ = post
        self.lambda0_ = post.mean_lambda0
        self.lambda0_sd_ = post.sd_lambda0
        self.W_ = post.mean_W
        self.W_sd_ = post.sd_W
        self.G_ = post.mean_G
        self.grid_ = grid
        self.params_ = HawkesParams(post.mean_lambda0, post.mean_W, post.mean_G, grid)
        self.n_features_in_ = X.shape[1]
        return self

    def intensity(self, X) -> np.ndarray:
        """Rates under the posterior-mean parameters, shape (T, K)."""
        check_is_fitted(self, "params_")
        return compute_rates(self.params_, check_counts(X, self.n_features_in_))

    def score(self, X, y=None) -> float:
        """Poisson log-likelihood of `X` under the posterior-mean parameters."""
        check_is_fitted(self, "params_")
        return log_likelihood(self.params_, check_counts(X, self.n_features_in_))

    def sample(self, n_bins: int, random_state=None) -> np.ndarray:
        """Simulate a count matrix from the fitted model."""
        check_is_fitted(self, "params_")
        return simulate(self.params_, n_bins, check_random_seed(random_state)).counts
