"""
Batch pipeline behind the CLI: ingest, simulate, fit, influence and
temporal runs, each writing its outputs plus a ``run_manifest.json``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from . import temporal
from .config import RunConfig
from .events import (DataError, NewsClass, RawEvent, UrlSeries, bin_series, drop_gap_overlapping,
                     event_sort_key, filter_cross_platform, group_by_url, parse_events,
                     write_events)
from .gibbs import derive_seed, fit
from .hawkes import HawkesParams, LagKernelGrid, simulate
from .influence import build_report, write_report
from .posteriors import PosteriorRecord, read_posteriors, write_posteriors

logger = logging.getLogger(__name__)

STORE_NAME = "events.csv"
POSTERIORS_NAME = "posteriors.csv"


class FitFailure(RuntimeError):
    pass


def _version() -> str:
    try:
        return version("crossflow")
    except PackageNotFoundError:
        return "0+unknown"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: RunConfig, inputs=(), extra=None):
    manifest = {
        "command": command,
        "version": _version(),
        "config_sha256": config.digest(),
        "seed": config.seed,
        "inputs": {os.path.basename(p): file_digest(p) for p in inputs},
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


# --- ingest -------------------------------------------------------------------

def load_events(path, config: RunConfig):
    with open(path, "rb") as f:
        return parse_events(f, config.registry)


def summarize_events(events, config: RunConfig) -> dict:
    per = {nc.value: {name: 0 for name in config.registry.names} for nc in NewsClass}
    for ev in events:
        per[ev.news_class.value][config.registry.names[ev.community]] += 1
    return {"events": len(events), "urls": len({ev.url for ev in events}),
            "events_per_class_community": per}


def run_ingest(config: RunConfig, input_path, out_dir) -> dict:
    events, summary = load_events(input_path, config)
    events.sort(key=event_sort_key)
    # fail early on inconsistent labels rather than at fit time
    group_by_url(events, config.K)
    os.makedirs(out_dir, exist_ok=True)
    store = os.path.join(out_dir, STORE_NAME)
    with open(store, "w", newline="", encoding="utf-8") as f:
        write_events(events, config.registry, f)
    result = {"parse": summary.as_dict(), **summarize_events(events, config)}
    with open(os.path.join(out_dir, "ingest_summary.json"), "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    write_manifest(out_dir, "ingest", config, [input_path])
    return result


def load_store(path, config: RunConfig) -> list[RawEvent]:
    events, summary = load_events(path, config)
    if summary.rejected:
        raise DataError(f"{path}: {summary.rejected} malformed rows in event store "
                        f"(first: {summary.errors[:1]})")
    return events


# --- simulate -----------------------------------------------------------------

def counts_to_events(url: str, domain: str, counts: np.ndarray, news_class: NewsClass,
                     delta_t: int, origin: int = 0) -> list[RawEvent]:
    out = []
    for t, k in zip(*np.nonzero(counts)):
        ts = origin + int(t) * delta_t
        out.extend(RawEvent(url, domain, int(k), ts, None, news_class)
                   for _ in range(int(counts[t, k])))
    return out


def run_simulate(config: RunConfig, params: HawkesParams, n_urls: int, T: int, out_dir,
                 news_class: NewsClass = NewsClass.MAINSTREAM, params_dir=None) -> dict:
    """Simulate `n_urls` independent series and write them as an event store.

    URL i is ``https://sim.invalid/u<i>``; its bins map to timestamps
    ``t * delta_t``. The generating parameters are stored next to the store.
    """
    from .hawkes import save_params

    if params.K != config.K:
        raise DataError(f"params have K={params.K}, config has {config.K} communities")
    if n_urls < 0:
        raise ValueError("n_urls must be >= 0")
    events = []
    totals = np.zeros(config.K, dtype=np.int64)
    for i in range(n_urls):
        url = f"https://sim.invalid/u{i:06d}"
        counts = simulate(params, T, derive_seed(config.seed, url)).counts
        totals += counts.sum(axis=0)
        events += counts_to_events(url, "sim.invalid", counts, news_class, config.delta_t)
    events.sort(key=event_sort_key)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, STORE_NAME), "w", newline="", encoding="utf-8") as f:
        write_events(events, config.registry, f)
    save_params(params, os.path.join(out_dir, "true_params"), config.registry.names)
    meta = {"n_urls": n_urls, "T": T, "seed": config.seed, "news_class": news_class.value,
            "delta_t": config.delta_t, "event_totals": totals.tolist(),
            "true_params": "true_params/"}
    with open(os.path.join(out_dir, "simulate_meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    inputs = [os.path.join(params_dir, n) for n in ("lambda0.csv", "W.csv", "G.csv", "grid.csv")] \
        if params_dir else []
    write_manifest(out_dir, "simulate", config, inputs, {"n_urls": n_urls, "T": T})
    return meta


# --- fit ------------------------------------------------------------------------

@dataclass
class FitSelection:
    series: list
    n_total: int
    n_cross_platform: int
    dropped: list = field(default_factory=list)


def select_series(events, config: RunConfig) -> FitSelection:
    series = group_by_url(events, config.K)
    cross = filter_cross_platform(series, config.registry.indices(config.required),
                                  config.registry.indices(config.any_of))
    kept, dropped = drop_gap_overlapping(cross, config.gap_schedule, config.drop_fraction)
    return FitSelection(kept, len(series), len(cross), dropped)


def _fit_one(job):
    url, news_class, counts, priors, schedule, edges, seed = job
    try:
        post = fit(counts, priors, schedule, seed=seed, grid=LagKernelGrid(edges))
    except Exception as exc:  # reported per URL by the caller
        return url, None, f"{type(exc).__name__}: {exc}"
    rec = PosteriorRecord(url, news_class, post.n_samples, post.mean_lambda0, post.mean_W,
                          post.sd_W, post.sd_lambda0, post.mean_edge_counts, post.T)
    return url, rec, None


def fit_series(series: list[UrlSeries], config: RunConfig, workers: int = 1):
    """Fit every series; returns (records sorted by url, {url: error})."""
    jobs = []
    for s in series:
        counts = bin_series(s, config.delta_t, config.K).counts
        jobs.append((s.url, s.news_class, counts, config.priors, config.schedule,
                     tuple(config.lag_edges), derive_seed(config.seed, s.url)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_fit_one(j) for j in jobs]
    records, failures = [], {}
    for url, rec, err in results:
        if err is None:
            records.append(rec)
        else:
            failures[url] = err
    records.sort(key=lambda r: r.url)
    return records, failures


def class_counts(series: list[UrlSeries], names) -> dict:
    out = {}
    for nc in NewsClass:
        rows = [s for s in series if s.news_class is nc]
        if not rows:
            continue
        c = np.stack([s.counts() for s in rows])
        out[nc.value] = {"urls": dict(zip(names, (c > 0).sum(axis=0).tolist())),
                         "events": dict(zip(names, c.sum(axis=0).tolist()))}
    return out


def run_fit(config: RunConfig, store_path, out_dir, workers: int | None = None,
            strict: bool | None = None) -> dict:
    workers = config.workers if workers is None else workers
    strict = config.strict if strict is None else strict
    events = load_store(store_path, config)
    sel = select_series(events, config)
    logger.info("%d URLs, %d cross-platform, %d dropped for gaps, %d to fit",
                sel.n_total, sel.n_cross_platform, len(sel.dropped), len(sel.series))
    if not sel.series:
        raise DataError("no URLs survive filtering; nothing to fit")
    counts = class_counts(sel.series, config.registry.names)
    for cls, c in counts.items():
        logger.info("%s: urls %s events %s", cls, c["urls"], c["events"])
    records, failures = fit_series(sel.series, config, workers)
    for url, err in sorted(failures.items()):
        logger.warning("fit failed for %s: %s", url, err)
    if failures and strict:
        raise FitFailure(f"{len(failures)} URL fits failed (first: "
                         f"{next(iter(sorted(failures.items())))})")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, POSTERIORS_NAME), "w", newline="") as f:
        write_posteriors(records, config.registry.names, f)
    log = {"urls_total": sel.n_total, "urls_cross_platform": sel.n_cross_platform,
           "urls_dropped_gaps": sorted(s.url for s in sel.dropped),
           "urls_fitted": len(records), "failures": dict(sorted(failures.items())),
           "table": counts}
    with open(os.path.join(out_dir, "fit_log.json"), "w") as f:
        json.dump(log, f, indent=2, sort_keys=True)
        f.write("\n")
    write_manifest(out_dir, "fit", config, [store_path])
    return log


# --- influence ----------------------------------------------------------------

def event_totals(events, config: RunConfig, urls=None) -> dict:
    tot: dict = {}
    for ev in events:
        if urls is not None and ev.url not in urls:
            continue
        tot.setdefault(ev.url, np.zeros(config.K, dtype=np.int64))[ev.community] += 1
    return tot


def run_influence(config: RunConfig, posteriors_path, store_path, out_dir) -> dict:
    with open(posteriors_path, newline="") as f:
        records, names = read_posteriors(f)
    if names != list(config.registry.names):
        raise DataError(f"posteriors communities {names} differ from config")
    events = load_store(store_path, config)
    urls = {r.url for r in records}
    totals = event_totals(events, config, urls)
    report = build_report(records, totals, names)
    warnings = []
    for nc in NewsClass:
        if nc not in report.classes:
            msg = f"no {nc.value} URLs in posteriors; {nc.value} sections omitted"
            logger.warning(msg)
            warnings.append(msg)
    write_report(report, out_dir)
    write_manifest(out_dir, "influence", config, [posteriors_path, store_path])
    return {"report": report, "warnings": warnings}


# --- temporal -----------------------------------------------------------------

def _write_rows(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        csv.writer(f, lineterminator="\n").writerows(rows)


def _write_cdf(path, values):
    _write_rows(path, [["value", "cumulative_probability"],
                       *([repr(v), repr(p)] for v, p in temporal.ecdf(values))])


def run_temporal(config: RunConfig, store_path, out_dir) -> dict:
    events = load_store(store_path, config)
    groups = config.group_map
    if not groups.names:
        raise DataError("temporal analysis needs at least one configured group")
    os.makedirs(out_dir, exist_ok=True)
    records = temporal.build_sequences(events, groups)

    first_hop = temporal.classify_sequences(records, groups.names, "first_hop")
    full = temporal.classify_sequences(records, groups.names, "full")
    _write_rows(os.path.join(out_dir, "sequences_first_hop.csv"), first_hop.rows())
    _write_rows(os.path.join(out_dir, "sequences_full.csv"), full.rows())

    summary = [["comparison", "class", "first_faster", "second_faster", "ties"]]
    for a, b in config.group_pairs():
        for nc in NewsClass:
            deltas = temporal.first_occurrence_delta(
                [r for r in records if r.news_class is nc], a, b)
            fa, fb, ties = temporal.faster_counts(deltas)
            summary.append([f"{a} vs {b}", nc.value, fa, fb, ties])
            _write_cdf(os.path.join(out_dir, f"cdf_first_delta_{_safe(a)}_{_safe(b)}_{nc.value}.csv"),
                       deltas.values())
    _write_rows(os.path.join(out_dir, "first_occurrence_summary.csv"), summary)

    for g in groups.names:
        for nc in NewsClass:
            sel = [ev for ev in events if ev.news_class is nc]
            lags = temporal.repost_lags(sel, groups, g)
            _write_cdf(os.path.join(out_dir, f"cdf_repost_lag_{_safe(g)}_{nc.value}.csv"),
                       [d for ds in lags.values() for d in ds])
            gaps = temporal.mean_interarrival(sel, groups, g)
            _write_cdf(os.path.join(out_dir, f"cdf_interarrival_{_safe(g)}_{nc.value}.csv"),
                       gaps.values())
            try:
                days, ratios = temporal.normalized_daily_occurrence(events, groups, g, nc)
            except ValueError:
                continue
            _write_rows(os.path.join(out_dir, f"daily_{_safe(g)}_{nc.value}.csv"),
                        [["day", "ratio"], *([d.isoformat(), repr(float(r))]
                                             for d, r in zip(days, ratios))])

    fractions, skipped = temporal.user_alternative_fraction(events)
    _write_rows(os.path.join(out_dir, "user_alternative_fraction.csv"),
                [["user", "alternative_fraction"], *([u, repr(f)] for u, f in fractions)])
    _write_cdf(os.path.join(out_dir, "cdf_user_alternative_fraction.csv"),
               [f for _, f in fractions])

    for nc in NewsClass:
        graph = temporal.build_flow_graph(r for r in records if r.news_class is nc)
        with open(os.path.join(out_dir, f"flow_{nc.value}.dot"), "w", encoding="utf-8") as f:
            f.write(temporal.to_dot(graph, f"flow_{nc.value}"))

    meta = {"urls": len(records), "events": len(events), "events_without_user": skipped,
            "user_fraction_counts": "posts", "day_boundary": "UTC",
            "tie_break_order": groups.names}
    with open(os.path.join(out_dir, "temporal_meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    write_manifest(out_dir, "temporal", config, [store_path])
    return {"records": records, "first_hop": first_hop, "full": full, "meta": meta}
