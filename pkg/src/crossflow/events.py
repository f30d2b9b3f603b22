"""
Event data model: ingestion of URL-share logs, per-URL grouping, dataset
filters and time binning into count matrices.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Mapping, Sequence
from urllib.parse import urlsplit, urlunsplit

import numpy as np

FIELDS = ("url", "domain", "community", "timestamp", "user", "news_class")


class DataError(ValueError):
    """Raised when input data violates a structural contract."""


class NewsClass(str, Enum):
    ALTERNATIVE = "alternative"
    MAINSTREAM = "mainstream"

    @classmethod
    def parse(cls, value: str) -> "NewsClass":
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValueError(f"unknown news class {value!r}") from None


@dataclass(frozen=True)
class CommunityRegistry:
    """Dense, ordered mapping between community names and indices 0..K-1."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise ValueError("community names must be unique")
        if any(not n for n in names):
            raise ValueError("community names must be non-empty")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    def __iter__(self):
        return iter(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown community {name!r}") from None

    def indices(self, names: Iterable[str]) -> frozenset[int]:
        return frozenset(self.index(n) for n in names)


@dataclass(frozen=True)
class RawEvent:
    url: str
    domain: str
    community: int
    timestamp: int
    user: str | None
    news_class: NewsClass


@dataclass
class ParseSummary:
    rows: int = 0
    parsed: int = 0
    unknown_community: int = 0
    malformed: Counter = field(default_factory=Counter)
    errors: list = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return self.rows - self.parsed

    def record(self, line: int, reason: str, detail: str):
        self.malformed[reason] += 1
        if reason == "unknown_community":
            self.unknown_community += 1
        # keep the first few messages verbatim, counts cover the rest
        if len(self.errors) < 100:
            self.errors.append((line, reason, detail))

    def as_dict(self) -> dict:
        return {
            "rows": self.rows,
            "parsed": self.parsed,
            "rejected": self.rejected,
            "unknown_community": self.unknown_community,
            "malformed": dict(sorted(self.malformed.items())),
            "errors": [
                {"line": line, "reason": reason, "detail": detail}
                for line, reason, detail in self.errors
            ],
        }


def normalize_url(url: str) -> str:
    """Lowercase scheme and host, drop the fragment, keep path and query."""
    url = url.strip()
    parts = urlsplit(url)
    if not parts.scheme and not parts.netloc:
        return url
    return urlunsplit((parts.scheme.lower(), parts.netloc.lower(),
                       parts.path, parts.query, ""))


def url_host(url: str) -> str:
    host = urlsplit(url).hostname
    return host or ""


def domain_matches(url: str, domain: str) -> bool:
    """True when `domain` is the url's host or a parent domain of it.

    URLs without a scheme/host (opaque ids) are accepted as-is.
    """
    host = url_host(url)
    if not host:
        return True
    domain = domain.lower()
    return host == domain or host.endswith("." + domain)


def _row_to_event(row: Mapping, registry: CommunityRegistry, summary: ParseSummary,
                  line: int) -> RawEvent | None:
    missing = [f for f in FIELDS if f not in row]
    if missing:
        summary.record(line, "missing_field", ",".join(missing))
        return None
    url = normalize_url(str(row["url"] or ""))
    if not url:
        summary.record(line, "empty_url", "")
        return None
    community = str(row["community"] or "").strip()
    if community not in registry:
        summary.record(line, "unknown_community", community)
        return None
    try:
        ts = row["timestamp"]
        timestamp = int(ts) if isinstance(ts, int) else int(str(ts).strip())
    except (TypeError, ValueError):
        summary.record(line, "bad_timestamp", str(row["timestamp"]))
        return None
    if timestamp < 0:
        summary.record(line, "bad_timestamp", str(timestamp))
        return None
    try:
        news_class = NewsClass.parse(str(row["news_class"] or ""))
    except ValueError:
        summary.record(line, "bad_news_class", str(row["news_class"]))
        return None
    domain = str(row["domain"] or "").strip().lower()
    if not domain or not domain_matches(url, domain):
        summary.record(line, "domain_mismatch", f"{domain} vs {url}")
        return None
    user = row["user"]
    user = str(user).strip() if user not in (None, "") else None
    return RawEvent(url, domain, registry.index(community), timestamp,
                    user or None, news_class)


def parse_events(stream: IO, registry: CommunityRegistry,
                 fmt: str | None = None) -> tuple[list[RawEvent], ParseSummary]:
    """Parse a CSV or NDJSON event log.

    Parameters
    ----------
    stream : binary or text file object
        CSV with header ``url,domain,community,timestamp,user,news_class`` or
        NDJSON with the same keys. Format is sniffed from the first
        non-blank character unless `fmt` is ``"csv"`` or ``"ndjson"``.
    registry : CommunityRegistry
        Known communities; rows naming any other community are rejected.

    Returns
    -------
    events : list of RawEvent
    summary : ParseSummary
        Row counts and per-reason rejection counts. Rejected rows are
        never silently dropped.
    """
    if len(registry) == 0:
        raise ValueError("community registry is empty")
    raw = stream.read()
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8-sig")
    elif raw.startswith("﻿"):
        raw = raw[1:]
    summary = ParseSummary()
    events: list[RawEvent] = []
    if fmt is None:
        head = raw.lstrip()[:1]
        fmt = "ndjson" if head == "{" else "csv"

    if fmt == "ndjson":
        for line_no, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            summary.rows += 1
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("not an object")
            except ValueError as exc:
                summary.record(line_no, "bad_json", str(exc))
                continue
            ev = _row_to_event(obj, registry, summary, line_no)
            if ev is not None:
                events.append(ev)
                summary.parsed += 1
    elif fmt == "csv":
        if not raw.strip():
            return events, summary
        reader = csv.DictReader(io.StringIO(raw))
        missing = [f for f in FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"CSV header lacks columns: {', '.join(missing)}")
        for row in reader:
            summary.rows += 1
            line_no = reader.line_num
            if None in row or any(v is None for v in row.values()):
                summary.record(line_no, "wrong_field_count", "")
                continue
            ev = _row_to_event(row, registry, summary, line_no)
            if ev is not None:
                events.append(ev)
                summary.parsed += 1
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return events, summary


def write_events(events: Iterable[RawEvent], registry: CommunityRegistry, stream: IO[str]):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(FIELDS)
    for ev in events:
        writer.writerow((ev.url, ev.domain, registry.names[ev.community], ev.timestamp,
                         ev.user or "", ev.news_class.value))


def event_sort_key(ev: RawEvent):
    return (ev.url, ev.timestamp, ev.community, ev.user or "")


@dataclass(frozen=True)
class UrlSeries:
    """All shares of one URL, split by community.

    ``times[k]`` is a sorted int64 array of timestamps on community k.
    """

    url: str
    news_class: NewsClass
    times: tuple
    domain: str = ""

    def __post_init__(self):
        times = tuple(np.sort(np.asarray(t, dtype=np.int64)) for t in self.times)
        if not any(t.size for t in times):
            raise DataError(f"series {self.url!r} has no events")
        object.__setattr__(self, "times", times)

    @property
    def n_communities(self) -> int:
        return len(self.times)

    @property
    def t_first(self) -> int:
        return int(min(t[0] for t in self.times if t.size))

    @property
    def t_last(self) -> int:
        return int(max(t[-1] for t in self.times if t.size))

    @property
    def duration(self) -> int:
        return self.t_last - self.t_first

    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times], dtype=np.int64)

    def present(self) -> frozenset[int]:
        return frozenset(k for k, t in enumerate(self.times) if t.size)


def group_by_url(events: Iterable[RawEvent], n_communities: int) -> list[UrlSeries]:
    """Split events into one series per distinct URL, sorted by URL."""
    buckets: dict[str, list[list[int]]] = {}
    classes: dict[str, NewsClass] = {}
    domains: dict[str, str] = {}
    for ev in events:
        if not 0 <= ev.community < n_communities:
            raise DataError(f"community index {ev.community} out of range")
        known = classes.setdefault(ev.url, ev.news_class)
        if known is not ev.news_class:
            raise DataError(f"conflicting news_class for url {ev.url!r}: "
                            f"{known.value} vs {ev.news_class.value}")
        domains.setdefault(ev.url, ev.domain)
        lists = buckets.get(ev.url)
        if lists is None:
            lists = buckets[ev.url] = [[] for _ in range(n_communities)]
        lists[ev.community].append(ev.timestamp)
    return [UrlSeries(url, classes[url], tuple(buckets[url]), domains[url])
            for url in sorted(buckets)]


def flatten(series: Iterable[UrlSeries]) -> list[tuple[str, int, int]]:
    """(url, community, timestamp) triples, the inverse of grouping."""
    out = []
    for s in series:
        for k, ts in enumerate(s.times):
            out.extend((s.url, k, int(t)) for t in ts)
    return out


def filter_cross_platform(series: Iterable[UrlSeries], required: Iterable[int] = (),
                          any_of: Iterable[int] = ()) -> list[UrlSeries]:
    """Keep series active on every `required` community and on at least one
    `any_of` community (an empty `any_of` imposes no condition)."""
    required = frozenset(required)
    any_of = frozenset(any_of)
    if required & any_of:
        raise ValueError("required and any_of must be disjoint")
    kept = []
    for s in series:
        present = s.present()
        if not required <= present:
            continue
        if any_of and not (any_of & present):
            continue
        kept.append(s)
    return kept


@dataclass(frozen=True)
class GapSchedule:
    """Collection outages: community index -> list of [start, end) intervals."""

    intervals: Mapping[int, tuple] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for k, ivs in self.intervals.items():
            ivs = sorted((int(a), int(b)) for a, b in ivs)
            for a, b in ivs:
                if not a < b:
                    raise ValueError(f"gap interval [{a}, {b}) is empty")
            for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
                if a1 < b0:
                    raise ValueError(f"overlapping gap intervals for community {k}")
            clean[int(k)] = tuple(ivs)
        object.__setattr__(self, "intervals", clean)

    def all_intervals(self) -> list[tuple[int, int]]:
        return [iv for ivs in self.intervals.values() for iv in ivs]

    def overlaps(self, t_first: int, t_last: int) -> bool:
        return any(t_first < b and t_last >= a for a, b in self.all_intervals())


def drop_gap_overlapping(series: Sequence[UrlSeries], gaps: GapSchedule,
                         fraction: float) -> tuple[list[UrlSeries], list[UrlSeries]]:
    """Drop the shortest-lived `fraction` of the series that overlap a gap.

    The number dropped is ``ceil(fraction * n_overlapping)``; shortest
    duration first, ties broken by URL. Input order is kept in `kept`.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    overlapping = [s for s in series if gaps.overlaps(s.t_first, s.t_last)]
    # guard against 0.1 * 10 evaluating to 1.0000000000000002
    n_drop = math.ceil(round(fraction * len(overlapping), 9))
    ranked = sorted(overlapping, key=lambda s: (s.duration, s.url))
    drop_urls = {s.url for s in ranked[:n_drop]}
    kept = [s for s in series if s.url not in drop_urls]
    dropped = [s for s in ranked[:n_drop]]
    return kept, dropped


@dataclass(frozen=True)
class BinnedCounts:
    counts: np.ndarray
    delta_t: int
    origin: int

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] < 1:
            raise ValueError("counts must be a T x K matrix with T >= 1")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.round(counts)):
                raise ValueError("counts must be integers")
        counts = counts.astype(np.int64)
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def T(self) -> int:
        return self.counts.shape[0]

    @property
    def K(self) -> int:
        return self.counts.shape[1]


def bin_series(series: UrlSeries, delta_t: int, n_communities: int | None = None) -> BinnedCounts:
    """Count events per `delta_t`-second bin, starting at the aligned bin
    containing the first event and ending at the bin of the last one."""
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    K = series.n_communities if n_communities is None else n_communities
    if K != series.n_communities:
        raise ValueError(f"series has {series.n_communities} communities, expected {K}")
    if not any(t.size for t in series.times):
        raise DataError(f"series {series.url!r} is empty")
    origin = (series.t_first // delta_t) * delta_t
    T = (series.t_last - origin) // delta_t + 1
    counts = np.zeros((T, K), dtype=np.int64)
    for k, ts in enumerate(series.times):
        if ts.size:
            np.add.at(counts[:, k], (ts - origin) // delta_t, 1)
    return BinnedCounts(counts, delta_t, origin)
