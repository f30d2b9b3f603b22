"""
Discrete-time multivariate Hawkes model.

Time is cut into bins; ``s[t, k]`` counts events of process k in bin t and
the rate of process k in bin t is

    lam[t, k] = lambda0[k] + sum_{k'} sum_{t' < t} s[t', k'] * h[k' -> k][t - t']

with ``h[k' -> k][d] = W[k', k] * g[k' -> k][d]`` for lags ``1 <= d <= D`` and
zero beyond. Rows of ``W`` are sources, columns are targets. The lag pmf
``g`` is piecewise constant over a small set of lag bins (see
:class:`LagKernelGrid`), which keeps the Gibbs updates conjugate.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .events import BinnedCounts

# log-spaced lag bin edges for a 720-bin (12 h at 1 min) window
DEFAULT_LAG_EDGES = (1, 2, 4, 8, 16, 64, 256, 512, 721)


class StationarityError(ValueError):
    """Raised when the weight matrix is not subcritical."""


def default_lag_edges(max_lag: int) -> tuple[int, ...]:
    """Log-spaced lag bin edges covering lags 1..max_lag."""
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if max_lag == 720:
        return DEFAULT_LAG_EDGES
    edges = [1]
    while edges[-1] * 2 <= max_lag:
        edges.append(edges[-1] * 2)
    edges.append(max_lag + 1)
    return tuple(edges)


@dataclass(frozen=True)
class LagKernelGrid:
    """Partition of the lags 1..D into B contiguous bins.

    ``edges`` has B+1 strictly increasing integers with ``edges[0] == 1``;
    bin b holds lags ``edges[b] <= d < edges[b+1]``.
    """

    edges: tuple

    def __post_init__(self):
        edges = tuple(int(e) for e in self.edges)
        if len(edges) < 2:
            raise ValueError("need at least one lag bin")
        if edges[0] != 1:
            raise ValueError("first lag edge must be 1")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("lag edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def default(cls, max_lag: int = 720) -> "LagKernelGrid":
        return cls(default_lag_edges(max_lag))

    @property
    def max_lag(self) -> int:
        return self.edges[-1] - 1

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(np.asarray(self.edges, dtype=np.int64))

    def lag_bin(self, lag):
        """Lag-bin index of each lag in 1..D."""
        lag = np.asarray(lag)
        if np.any(lag < 1) or np.any(lag > self.max_lag):
            raise ValueError("lag outside 1..D")
        return np.searchsorted(self.edges, lag, side="right") - 1

    def expand(self, pmf: np.ndarray) -> np.ndarray:
        """Spread per-bin mass uniformly over each bin's lags.

        ``pmf[..., B] -> g[..., D]`` with ``g[..., d-1]`` the mass at lag d.
        """
        pmf = np.asarray(pmf, dtype=float)
        return np.repeat(pmf / self.widths, self.widths, axis=-1)


@dataclass(frozen=True)
class HawkesParams:
    lambda0: np.ndarray
    W: np.ndarray
    G: np.ndarray
    grid: LagKernelGrid

    def __post_init__(self):
        lambda0 = np.array(self.lambda0, dtype=float).reshape(-1)
        K = lambda0.size
        W = np.array(self.W, dtype=float).reshape(K, K)
        G = np.array(self.G, dtype=float)
        if G.shape != (K, K, self.grid.n_bins):
            raise ValueError(f"G must have shape {(K, K, self.grid.n_bins)}, got {G.shape}")
        for name, arr in (("lambda0", lambda0), ("W", W), ("G", G)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            if (arr < 0).any():
                raise ValueError(f"{name} has negative entries")
        if not np.allclose(G.sum(axis=-1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("each lag pmf in G must sum to 1")
        for arr in (lambda0, W, G):
            arr.setflags(write=False)
        object.__setattr__(self, "lambda0", lambda0)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "G", G)

    @property
    def K(self) -> int:
        return self.lambda0.size

    @property
    def max_lag(self) -> int:
        return self.grid.max_lag

    def lag_kernel(self) -> np.ndarray:
        """Per-lag pmf ``g[k', k, d-1]``, shape (K, K, D)."""
        return self.grid.expand(self.G)

    def impulse_responses(self) -> np.ndarray:
        """``h[k', k, d-1] = W[k', k] * g[k', k, d-1]``, shape (K, K, D)."""
        return self.W[:, :, None] * self.lag_kernel()


def impulse(params: HawkesParams, source: int, target: int, lag: int) -> float:
    """Added rate on `target` at `lag` bins after one event on `source`."""
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if lag > params.max_lag:
        return 0.0
    b = int(params.grid.lag_bin(lag))
    return float(params.W[source, target] * params.G[source, target, b]
                 / params.grid.widths[b])


def _as_counts(counts) -> np.ndarray:
    if isinstance(counts, BinnedCounts):
        return counts.counts
    return np.asarray(counts)


def compute_rates(params: HawkesParams, counts) -> np.ndarray:
    """Rate matrix ``lam[t, k]`` for an observed count matrix (T x K)."""
    s = _as_counts(counts)
    if s.ndim != 2 or s.shape[1] != params.K:
        raise ValueError(f"counts must be T x {params.K}, got shape {s.shape}")
    T = s.shape[0]
    D = params.max_lag
    h = params.impulse_responses()
    rates = np.zeros((T + D + 1, params.K))
    # each occupied bin adds its impulse response to the next D bins
    for t, k in zip(*np.nonzero(s)):
        rates[t + 1:t + 1 + D] += s[t, k] * h[k].T
    return rates[:T] + params.lambda0


def log_likelihood(params: HawkesParams, counts) -> float:
    """Poisson log-likelihood of the counts under the model rates."""
    s = _as_counts(counts)
    lam = compute_rates(params, s)
    occupied = s > 0
    if np.any(lam[occupied] <= 0):
        raise ValueError("zero rate at a bin with events: log-likelihood is -inf")
    log_lam = np.zeros_like(lam)
    log_lam[occupied] = np.log(lam[occupied])
    return float(np.sum(s * log_lam - lam - gammaln(s + 1.0)))


def spectral_radius(W, tol: float = 1e-8, max_iter: int = 100_000) -> float:
    """Perron root of a non-negative square matrix by power iteration.

    Iterates on ``W + I`` (same Perron vector, aperiodic) and stops when
    the Collatz-Wielandt bounds agree to `tol` relative. Falls back to a
    dense eigen-solve when the iteration stalls, which happens for
    reducible matrices with defective spectra.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("W must be square")
    if (W < 0).any():
        raise ValueError("W must be non-negative")
    if not W.any():
        return 0.0
    A = W + np.eye(W.shape[0])
    x = np.ones(W.shape[0])
    for _ in range(max_iter):
        y = A @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        if hi - lo <= tol * hi:
            return float(max(0.5 * (lo + hi) - 1.0, 0.0))
        x = y / y.max()
        # zeros in x break the ratio bounds; nudge them positive
        x = np.maximum(x, 1e-300)
    return float(np.max(np.abs(np.linalg.eigvals(W))))


def simulate(params: HawkesParams, T: int, seed=None, delta_t: int = 1,
             origin: int = 0) -> BinnedCounts:
    """Draw a T-bin count matrix from the model.

    Bins are generated in time order, each count Poisson with the rate
    implied by the history so far. Runs of empty bins are drawn in one
    vectorised block whose rates are known in advance; the block is cut
    at its first non-empty bin and the excitation updated. The result is
    a deterministic function of ``(params, T, seed)``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rho = spectral_radius(params.W)
    if rho >= 1.0:
        raise StationarityError(f"spectral radius of W is {rho:.4g} >= 1")
    rng = np.random.default_rng(seed)
    K, D = params.K, params.max_lag
    h_t = np.transpose(params.impulse_responses(), (0, 2, 1))  # (K', D, K)
    excitation = np.zeros((T + D + 1, K))
    counts = np.zeros((T, K), dtype=np.int64)
    lambda0 = params.lambda0
    t = 0
    while t < T:
        total = lambda0.sum() + excitation[t].sum()
        block = int(min(T - t, 8192, max(16, 4.0 / total) if total > 0 else 8192))
        rates = lambda0 + excitation[t:t + block]
        draws = rng.poisson(rates)
        hit = np.flatnonzero(draws.any(axis=1))
        if hit.size == 0:
            t += block
            continue
        t += int(hit[0])
        row = draws[hit[0]]
        counts[t] = row
        for k in np.flatnonzero(row):
            excitation[t + 1:t + 1 + D] += row[k] * h_t[k]
        t += 1
    return BinnedCounts(counts, delta_t, origin)


# --- parameter bundle I/O -------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def save_params(params: HawkesParams, directory, names=None):
    """Write ``lambda0.csv``, ``W.csv``, ``G.csv`` and ``grid.csv``.

    Layouts (all with a header row):

    - lambda0.csv: ``community,lambda0`` - one row per community.
    - W.csv: ``source,<target names...>`` - row = source, column = target.
    - G.csv: ``source,target,bin_0..bin_{B-1}`` - K*K rows, source-major.
    - grid.csv: ``edge`` - the B+1 lag-bin edges.

    Floats are written with ``repr`` so a load round-trips bit-exactly.
    """
    os.makedirs(directory, exist_ok=True)
    K = params.K
    names = list(names) if names is not None else [str(k) for k in range(K)]
    if len(names) != K:
        raise ValueError("names must have one entry per community")
    with open(os.path.join(directory, "lambda0.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["community", "lambda0"])
        for name, v in zip(names, params.lambda0):
            w.writerow([name, _fmt(v)])
    with open(os.path.join(directory, "W.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["source", *names])
        for name, row in zip(names, params.W):
            w.writerow([name, *map(_fmt, row)])
    with open(os.path.join(directory, "G.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["source", "target", *[f"bin_{b}" for b in range(params.grid.n_bins)]])
        for i in range(K):
            for j in range(K):
                w.writerow([names[i], names[j], *map(_fmt, params.G[i, j])])
    with open(os.path.join(directory, "grid.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["edge"])
        for e in params.grid.edges:
            w.writerow([e])


def load_params(directory) -> tuple[HawkesParams, list[str]]:
    """Inverse of :func:`save_params`; returns the params and community names."""
    def rows(name):
        with open(os.path.join(directory, name), newline="") as f:
            r = csv.reader(f)
            next(r)
            return [row for row in r if row]

    lam_rows = rows("lambda0.csv")
    names = [r[0] for r in lam_rows]
    lambda0 = [float(r[1]) for r in lam_rows]
    K = len(names)
    W_rows = rows("W.csv")
    if [r[0] for r in W_rows] != names:
        raise ValueError("W.csv rows do not match lambda0.csv communities")
    W = [[float(v) for v in r[1:]] for r in W_rows]
    grid = LagKernelGrid(tuple(int(r[0]) for r in rows("grid.csv")))
    G = np.zeros((K, K, grid.n_bins))
    index = {n: i for i, n in enumerate(names)}
    seen = set()
    for r in rows("G.csv"):
        i, j = index[r[0]], index[r[1]]
        G[i, j] = [float(v) for v in r[2:]]
        seen.add((i, j))
    if len(seen) != K * K:
        raise ValueError("G.csv must list every (source, target) pair")
    return HawkesParams(lambda0, W, G, grid), names
