"""
Aggregation of per-URL fits into cross-community influence summaries:
mean weights per news class, percentage of events attributable to each
source community, and two-sample KS tests between the classes.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .events import NewsClass
from .posteriors import PosteriorRecord

UNDEFINED = "—"


class ReportError(ValueError):
    pass


@dataclass
class WeightSampleSet:
    """Per-URL posterior-mean weights, grouped by news class.

    ``weights[cls]`` has shape (n_urls, K, K); ``urls[cls]`` lists the URLs
    in the same order.
    """

    K: int
    weights: dict = field(default_factory=dict)
    urls: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Sequence[PosteriorRecord]) -> "WeightSampleSet":
        if not records:
            raise ReportError("no posterior records")
        K = records[0].K
        out = cls(K)
        for nc in NewsClass:
            rows = [r for r in records if r.news_class is nc]
            if rows:
                out.weights[nc] = np.stack([np.asarray(r.mean_W, dtype=float) for r in rows])
                out.urls[nc] = [r.url for r in rows]
        return out

    def classes(self) -> list[NewsClass]:
        return [nc for nc in NewsClass if nc in self.weights]

    def pair(self, news_class: NewsClass, source: int, target: int) -> np.ndarray:
        w = self.weights.get(news_class)
        if w is None:
            return np.zeros(0)
        return w[:, source, target]


def mean_weight_matrix(ws: WeightSampleSet, news_class: NewsClass, names=None) -> np.ndarray:
    w = ws.weights.get(news_class)
    if w is None or w.shape[0] == 0:
        names = names or [str(k) for k in range(ws.K)]
        raise ReportError(f"no {news_class.value} weights for pair {names[0]}->{names[0]}")
    return w.mean(axis=0)


def influence_percentage(weights, totals) -> np.ndarray:
    """Estimated percent of target events caused by each source.

    ``pct[A, B] = 100 * sum_u W_u[A, B] * n_u[A] / sum_u n_u[B]`` where
    ``n_u`` are a URL's per-community event totals. Targets without events
    are NaN (undefined), not zero.
    """
    weights = np.asarray(weights, dtype=float)
    totals = np.asarray(totals, dtype=float)
    if weights.ndim == 2:
        weights = weights[None]
        totals = totals[None]
    n, K, _ = weights.shape
    if totals.shape != (n, K):
        raise ValueError(f"totals must have shape {(n, K)}, got {totals.shape}")
    numer = np.einsum("uab,ua->ab", weights, totals)
    denom = totals.sum(axis=0)
    pct = np.full((K, K), np.nan)
    ok = denom > 0
    pct[:, ok] = 100.0 * numer[:, ok] / denom[ok]
    return pct


@dataclass(frozen=True)
class KSResult:
    D: float
    p: float


def kolmogorov_sf(x: float, tol: float = 1e-10) -> float:
    """Survival function of the Kolmogorov distribution, P(K > x).

    Uses the alternating series for x >= 1 and the Jacobi-theta form for
    small x, where the alternating series converges slowly.
    """
    if x <= 0:
        return 1.0
    if x < 1.0:
        c = math.sqrt(2.0 * math.pi) / x
        total, j = 0.0, 1
        while True:
            term = math.exp(-((2 * j - 1) ** 2) * math.pi ** 2 / (8.0 * x * x))
            total += term
            if term < tol:
                break
            j += 1
        return min(max(1.0 - c * total, 0.0), 1.0)
    total, j = 0.0, 1
    while True:
        term = math.exp(-2.0 * j * j * x * x)
        total += term if j % 2 else -term
        if term < tol:
            break
        j += 1
    return min(max(2.0 * total, 0.0), 1.0)


def ks_two_sample(a, b) -> KSResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    D is the largest gap between the empirical CDFs, evaluated at every
    pooled sample point. The p-value is the Kolmogorov survival function at
    ``sqrt(n_e) * D`` with ``n_e = n_a n_b / (n_a + n_b)``; it is
    conservative for very small samples.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate((a, b))
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    D = float(np.max(np.abs(fa - fb)))
    ne = a.size * b.size / (a.size + b.size)
    return KSResult(D, kolmogorov_sf(math.sqrt(ne) * D))


def significance_stars(p: float) -> str:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass
class ClassReport:
    news_class: NewsClass
    n_urls: int
    url_counts: np.ndarray          # URLs with >= 1 event per community
    events_per_community: np.ndarray
    mean_lambda0: np.ndarray
    mean_W: np.ndarray
    pct: np.ndarray


@dataclass
class InfluenceReport:
    names: list
    classes: dict                   # NewsClass -> ClassReport
    ks_D: np.ndarray | None = None
    ks_p: np.ndarray | None = None

    def stars(self) -> np.ndarray | None:
        if self.ks_p is None:
            return None
        return np.vectorize(significance_stars, otypes=[object])(self.ks_p)


def build_report(records: Sequence[PosteriorRecord], totals: Mapping[str, np.ndarray],
                 names: Sequence[str]) -> InfluenceReport:
    """Assemble per-class mean weights, percentages, background rates, event
    and URL counts, and (when both classes are present) KS p-values per pair.

    `totals` maps each URL to its per-community event totals and must cover
    exactly the URLs in `records`.
    """
    if not records:
        raise ReportError("no URLs to report on")
    urls = {r.url for r in records}
    missing = sorted(urls - set(totals))
    extra = sorted(set(totals) - urls)
    if missing or extra:
        raise ReportError("URL keys differ between posteriors and event totals; "
                          f"without totals: {missing[:20]}, without posteriors: {extra[:20]}")
    K = len(names)
    ws = WeightSampleSet.from_records(records)
    classes = {}
    for nc in ws.classes():
        rows = [r for r in records if r.news_class is nc]
        tot = np.stack([np.asarray(totals[r.url], dtype=float) for r in rows])
        if tot.shape[1] != K:
            raise ReportError(f"event totals have {tot.shape[1]} communities, expected {K}")
        classes[nc] = ClassReport(
            news_class=nc,
            n_urls=len(rows),
            url_counts=(tot > 0).sum(axis=0),
            events_per_community=tot.sum(axis=0).astype(np.int64),
            mean_lambda0=np.mean([r.mean_lambda0 for r in rows], axis=0),
            mean_W=mean_weight_matrix(ws, nc, names),
            pct=influence_percentage(ws.weights[nc], tot),
        )
    report = InfluenceReport(list(names), classes)
    if len(classes) == 2:
        D = np.zeros((K, K))
        p = np.zeros((K, K))
        for i in range(K):
            for j in range(K):
                res = ks_two_sample(ws.pair(NewsClass.ALTERNATIVE, i, j),
                                    ws.pair(NewsClass.MAINSTREAM, i, j))
                D[i, j], p[i, j] = res.D, res.p
        report.ks_D, report.ks_p = D, p
    return report


# --- rendering --------------------------------------------------------------

def format_weight(x: float) -> str:
    return f"{x:.4f}"


def format_rate(x: float) -> str:
    return f"{x:.6f}"


def format_pct(x: float) -> str:
    return UNDEFINED if not np.isfinite(x) else f"{x:.2f}"


def percent_change(alt: float, main: float) -> float:
    """Change from mainstream to alternative, in percent of mainstream."""
    if main == 0:
        return math.nan
    return 100.0 * (alt - main) / main


def weight_rows(report: InfluenceReport) -> list[list[str]]:
    """One row per (source, target): alternative mean, mainstream mean,
    percent change and significance stars."""
    alt = report.classes.get(NewsClass.ALTERNATIVE)
    main = report.classes.get(NewsClass.MAINSTREAM)
    stars = report.stars()
    rows = [["source", "target", "alternative", "mainstream", "change_pct", "significance"]]
    for i, a in enumerate(report.names):
        for j, b in enumerate(report.names):
            wa = alt.mean_W[i, j] if alt else math.nan
            wm = main.mean_W[i, j] if main else math.nan
            change = percent_change(wa, wm) if alt and main else math.nan
            rows.append([a, b,
                         format_weight(wa) if alt else "",
                         format_weight(wm) if main else "",
                         format_pct(change),
                         stars[i, j] if stars is not None else ""])
    return rows


def summary_rows(report: InfluenceReport) -> list[list[str]]:
    """URL counts, event counts and mean background rate per community,
    one block per quantity with a row per class and a total row."""
    order = [nc for nc in (NewsClass.MAINSTREAM, NewsClass.ALTERNATIVE) if nc in report.classes]
    rows = [["quantity", "class", *report.names]]
    for label, attr, fmt in (("URLs", "url_counts", "{:,}"), ("Events", "events_per_community", "{:,}")):
        for nc in order:
            vals = getattr(report.classes[nc], attr)
            rows.append([label, nc.value.capitalize(), *(fmt.format(int(v)) for v in vals)])
        total = sum(getattr(report.classes[nc], attr) for nc in order)
        rows.append([label, "Total", *(fmt.format(int(v)) for v in total)])
    for nc in order:
        rows.append(["Mean lambda0", nc.value.capitalize(),
                     *map(format_rate, report.classes[nc].mean_lambda0)])
    return rows


def render_text_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) if i < 2 else c.rjust(w)
                       for i, (c, w) in enumerate(zip(r, widths))).rstrip()
             for r in rows]
    return "\n".join(lines) + "\n"


def _nan_to_none(x):
    if isinstance(x, np.ndarray):
        return [_nan_to_none(v) for v in x.tolist()]
    if isinstance(x, list):
        return [_nan_to_none(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def report_to_dict(report: InfluenceReport) -> dict:
    out = {"communities": report.names, "classes": {}}
    for nc, cr in report.classes.items():
        out["classes"][nc.value] = {
            "n_urls": cr.n_urls,
            "url_counts": cr.url_counts.tolist(),
            "events_per_community": cr.events_per_community.tolist(),
            "mean_lambda0": _nan_to_none(cr.mean_lambda0),
            "mean_W": _nan_to_none(cr.mean_W),
            "pct": _nan_to_none(cr.pct),
        }
    if report.ks_p is not None:
        out["ks"] = {"D": _nan_to_none(report.ks_D), "p": _nan_to_none(report.ks_p),
                     "stars": report.stars().tolist(),
                     "samples": "per-URL posterior-mean weights"}
    return out


def _float(v) -> str:
    return repr(float(v))


def _write_matrix(path, names, M, fmt):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["source", *names])
        for name, row in zip(names, M):
            w.writerow([name, *(fmt(v) for v in row)])


def write_report(report: InfluenceReport, out_dir) -> list[str]:
    """Write JSON, matrix CSVs, long-format CSVs and text tables; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    with open(path("influence_report.json"), "w") as f:
        json.dump(report_to_dict(report), f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    names = report.names
    for nc, cr in report.classes.items():
        _write_matrix(path(f"mean_w_{nc.value}.csv"), names, cr.mean_W, _float)
        _write_matrix(path(f"pct_{nc.value}.csv"), names, cr.pct,
                      lambda v: repr(float(v)) if np.isfinite(v) else UNDEFINED)
    if report.ks_p is not None:
        _write_matrix(path("ks_p.csv"), names, report.ks_p, _float)
    with open(path("influence_long.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["metric", "source", "target", "class", "value"])
        for nc, cr in report.classes.items():
            for metric, M in (("mean_w", cr.mean_W), ("pct", cr.pct)):
                for i, a in enumerate(names):
                    for j, b in enumerate(names):
                        v = M[i, j]
                        w.writerow([metric, a, b, nc.value,
                                    repr(float(v)) if np.isfinite(v) else ""])
    for name, rows in (("weights_table", weight_rows(report)), ("summary_table", summary_rows(report))):
        with open(path(f"{name}.csv"), "w", newline="") as f:
            csv.writer(f, lineterminator="\n").writerows(rows)
        with open(path(f"{name}.txt"), "w") as f:
            f.write(render_text_table(rows))
    return written
