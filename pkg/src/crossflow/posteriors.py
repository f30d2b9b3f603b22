"""Per-URL posterior rows (``posteriors.csv``)."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .events import NewsClass


@dataclass
class PosteriorRecord:
    url: str
    news_class: NewsClass
    n_samples: int
    mean_lambda0: np.ndarray
    mean_W: np.ndarray
    sd_W: np.ndarray
    sd_lambda0: np.ndarray | None = None
    mean_edge_counts: np.ndarray | None = None
    T: int = 0

    @property
    def K(self) -> int:
        return len(self.mean_lambda0)


def header(names: Sequence[str]) -> list[str]:
    """Column order: url, news_class, n_samples, T, then mean_lambda0 per
    community, mean_W and sd_W row-major (source-major), sd_lambda0, and the
    mean attributed edge counts row-major."""
    pairs = [f"{a}->{b}" for a in names for b in names]
    return (["url", "news_class", "n_samples", "T"]
            + [f"mean_lambda0[{n}]" for n in names]
            + [f"mean_W[{p}]" for p in pairs]
            + [f"sd_W[{p}]" for p in pairs]
            + [f"sd_lambda0[{n}]" for n in names]
            + [f"mean_N[{p}]" for p in pairs])


def _f(x) -> str:
    return repr(float(x))


def write_posteriors(records: Iterable[PosteriorRecord], names: Sequence[str], stream: IO[str]):
    K = len(names)
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header(names))
    for r in sorted(records, key=lambda r: r.url):
        if r.K != K:
            raise ValueError(f"record {r.url!r} has K={r.K}, expected {K}")
        sd_lam = r.sd_lambda0 if r.sd_lambda0 is not None else np.full(K, np.nan)
        n_edge = r.mean_edge_counts if r.mean_edge_counts is not None else np.full((K, K), np.nan)
        w.writerow([r.url, r.news_class.value, r.n_samples, r.T,
                    *map(_f, r.mean_lambda0),
                    *map(_f, np.ravel(r.mean_W)),
                    *map(_f, np.ravel(r.sd_W)),
                    *map(_f, sd_lam),
                    *map(_f, np.ravel(n_edge))])


def read_posteriors(stream: IO[str]) -> tuple[list[PosteriorRecord], list[str]]:
    reader = csv.reader(stream)
    head = next(reader)
    names = [c[len("mean_lambda0["):-1] for c in head if c.startswith("mean_lambda0[")]
    K = len(names)
    if head != header(names):
        raise ValueError("posteriors.csv header does not match the documented layout")
    records = []
    for row in reader:
        if not row:
            continue
        vals = np.array([float(v) for v in row[4:]])
        i = 0

        def take(n):
            nonlocal i
            out = vals[i:i + n]
            i += n
            return out

        lam = take(K)
        mw = take(K * K).reshape(K, K)
        sw = take(K * K).reshape(K, K)
        sl = take(K)
        ne = take(K * K).reshape(K, K)
        records.append(PosteriorRecord(row[0], NewsClass.parse(row[1]), int(row[2]),
                                       lam, mw, sw, sl, ne, int(row[3])))
    return records, names
