import numpy as np
import pytest

from crossflow.hawkes import HawkesParams, LagKernelGrid


def geometric_G(K, grid, ratio=0.5):
    g = ratio ** np.arange(grid.n_bins)
    return np.tile(g / g.sum(), (K, K, 1))


def make_params(lambda0, W, grid=None, G=None):
    grid = grid or LagKernelGrid.default()
    lambda0 = np.atleast_1d(np.asarray(lambda0, dtype=float))
    K = lambda0.size
    W = np.asarray(W, dtype=float).reshape(K, K)
    if G is None:
        G = geometric_G(K, grid)
    return HawkesParams(lambda0, W, G, grid)


def random_params(rng, K, grid):
    lambda0 = rng.uniform(0.01, 0.5, K)
    W = rng.uniform(0, 0.4, (K, K))
    G = rng.dirichlet(np.ones(grid.n_bins), (K, K))
    return HawkesParams(lambda0, W, G, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- temporal fixture -------------------------------------------------------

TEMPORAL_GROUPS = {"R": [0, 1], "T": [2], "P": [3]}   # community 4 is ungrouped
DOMAINS = ["a.example", "b.example", "c.example"]


def temporal_events(seed=0, n_urls=200):
    """Random share log over 5 communities with deliberate same-second ties."""
    from crossflow.events import NewsClass, RawEvent
    r = np.random.default_rng(seed)
    base = 1_500_000_000
    events = []
    for i in range(n_urls):
        url = f"https://{DOMAINS[i % 3]}/story/{i}"
        nc = NewsClass.ALTERNATIVE if i % 2 else NewsClass.MAINSTREAM
        start = base + int(r.integers(0, 20 * 86_400))
        for _ in range(int(r.integers(1, 12))):
            # coarse offsets so ties across groups happen often
            ts = start + 600 * int(r.integers(0, 30))
            user = None if r.random() < 0.1 else f"user{int(r.integers(0, 40))}"
            events.append(RawEvent(url, DOMAINS[i % 3], int(r.integers(0, 5)), ts, user, nc))
    return events
