"""
Descriptive temporal analytics over raw share events: daily occurrence
ratios, per-user alternative share, re-post lags, inter-arrival times,
first-occurrence ordering across platform groups, and domain flow graphs.

Platform groups bundle communities (e.g. six subreddits into one "R"
group). Ties between groups at the same timestamp are broken by the order
in which groups are declared.
"""
from __future__ import annotations

import datetime as _dt
import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .events import NewsClass, RawEvent

ARROW = "→"
SECONDS_PER_DAY = 86_400


@dataclass(frozen=True)
class GroupMap:
    """Ordered platform groups; declaration order is the tie-break order."""

    groups: tuple  # ((name, frozenset of community indices), ...)

    def __post_init__(self):
        groups = tuple((str(n), frozenset(ks)) for n, ks in self.groups)
        names = [n for n, _ in groups]
        if len(set(names)) != len(names):
            raise ValueError("group names must be unique")
        seen = set()
        for name, ks in groups:
            if seen & ks:
                raise ValueError(f"group {name!r} shares communities with another group")
            seen |= ks
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "_of", {k: n for n, ks in groups for k in ks})
        object.__setattr__(self, "_rank", {n: i for i, n in enumerate(names)})

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Iterable[int]]) -> "GroupMap":
        return cls(tuple((n, frozenset(ks)) for n, ks in mapping.items()))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.groups]

    def group_of(self, community: int) -> str | None:
        return self._of.get(community)

    def rank(self, group: str) -> int:
        return self._rank[group]


def _by_url(events: Iterable[RawEvent], groups: GroupMap, group: str):
    out = defaultdict(list)
    for ev in events:
        if groups.group_of(ev.community) == group:
            out[ev.url].append(ev.timestamp)
    return {u: sorted(ts) for u, ts in out.items()}


def utc_day(timestamp: int) -> int:
    return timestamp // SECONDS_PER_DAY


def normalized_daily_occurrence(events: Iterable[RawEvent], groups: GroupMap, group: str,
                                news_class: NewsClass, span: tuple[int, int] | None = None):
    """Daily event counts divided by their mean over the observation span.

    Days are UTC calendar days; empty days inside the span count toward the
    mean. `span` is an inclusive (first_day, last_day) pair of day indices;
    by default it runs from the first to the last selected event.

    Returns ``(days, ratios)`` where `days` are ``datetime.date`` objects.
    """
    days = [utc_day(ev.timestamp) for ev in events
            if ev.news_class is news_class and groups.group_of(ev.community) == group]
    if not days:
        raise ValueError(f"no {news_class.value} events for group {group!r}")
    lo, hi = span if span is not None else (min(days), max(days))
    if hi < lo:
        raise ValueError("empty span")
    counts = np.zeros(hi - lo + 1)
    idx = np.asarray(days) - lo
    idx = idx[(idx >= 0) & (idx < counts.size)]
    np.add.at(counts, idx, 1)
    mean = counts.mean()
    ratios = counts / mean if mean > 0 else np.zeros_like(counts)
    epoch = _dt.date(1970, 1, 1)
    return [epoch + _dt.timedelta(days=int(d)) for d in range(lo, hi + 1)], ratios


def user_alternative_fraction(events: Iterable[RawEvent]):
    """Per user, the share of their news-URL posts that are alternative.

    Counts posts, so a user re-posting one URL contributes each post.
    Returns ``(rows, skipped)`` with rows ``(user, fraction)`` sorted by user
    and `skipped` the number of events without a user.
    """
    alt = Counter()
    total = Counter()
    skipped = 0
    for ev in events:
        if not ev.user:
            skipped += 1
            continue
        total[ev.user] += 1
        if ev.news_class is NewsClass.ALTERNATIVE:
            alt[ev.user] += 1
    return [(u, alt[u] / total[u]) for u in sorted(total)], skipped


def repost_lags(events: Iterable[RawEvent], groups: GroupMap, group: str) -> dict[str, list[int]]:
    """Seconds from a URL's first occurrence in `group` to each later one."""
    return {u: [t - ts[0] for t in ts[1:]]
            for u, ts in sorted(_by_url(events, groups, group).items()) if len(ts) > 1}


def mean_interarrival(events: Iterable[RawEvent], groups: GroupMap, group: str) -> dict[str, float]:
    return {u: (ts[-1] - ts[0]) / (len(ts) - 1)
            for u, ts in sorted(_by_url(events, groups, group).items()) if len(ts) > 1}


@dataclass(frozen=True)
class SequenceRecord:
    url: str
    news_class: NewsClass
    firsts: tuple  # ((group, first timestamp), ...) in appearance order
    domain: str = ""

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(g for g, _ in self.firsts)

    def first_time(self, group: str) -> int | None:
        for g, t in self.firsts:
            if g == group:
                return t
        return None


def build_sequences(events: Iterable[RawEvent], groups: GroupMap) -> list[SequenceRecord]:
    """First appearance of every URL in each group, ordered by time."""
    firsts: dict[str, dict[str, int]] = defaultdict(dict)
    meta = {}
    for ev in events:
        g = groups.group_of(ev.community)
        if g is None:
            continue
        meta.setdefault(ev.url, (ev.news_class, ev.domain))
        cur = firsts[ev.url].get(g)
        if cur is None or ev.timestamp < cur:
            firsts[ev.url][g] = ev.timestamp
    out = []
    for url in sorted(firsts):
        order = sorted(firsts[url].items(), key=lambda gt: (gt[1], groups.rank(gt[0])))
        nc, domain = meta[url]
        out.append(SequenceRecord(url, nc, tuple(order), domain))
    return out


def first_occurrence_delta(records: Iterable[SequenceRecord], group_a: str,
                           group_b: str) -> dict[str, int]:
    """``t_first(B) - t_first(A)`` per URL seen in both; positive means A was first."""
    out = {}
    for r in records:
        ta, tb = r.first_time(group_a), r.first_time(group_b)
        if ta is not None and tb is not None:
            out[r.url] = tb - ta
    return out


def faster_counts(deltas: Mapping[str, int]) -> tuple[int, int, int]:
    """(#URLs where A is faster, #URLs where B is faster, #ties)."""
    v = np.fromiter(deltas.values(), dtype=np.int64, count=len(deltas))
    return int((v > 0).sum()), int((v < 0).sum()), int((v == 0).sum())


def sequence_label(groups: Sequence[str], depth: str) -> str:
    if depth == "first_hop":
        if len(groups) == 1:
            return f"{groups[0]} only"
        return ARROW.join(groups[:2])
    if depth == "full":
        return ARROW.join(groups)
    raise ValueError(f"unknown depth {depth!r}")


@dataclass
class SequenceTable:
    depth: str
    labels: list
    counts: dict = field(default_factory=dict)   # NewsClass -> Counter(label)
    totals: dict = field(default_factory=dict)   # NewsClass -> int

    def count(self, label: str, news_class: NewsClass) -> int:
        return self.counts.get(news_class, Counter())[label]

    def percent(self, label: str, news_class: NewsClass) -> float:
        total = self.totals.get(news_class, 0)
        return 100.0 * self.count(label, news_class) / total if total else float("nan")

    def rows(self) -> list[list[str]]:
        classes = [NewsClass.ALTERNATIVE, NewsClass.MAINSTREAM]
        out = [["sequence", *(f"{c.value}_{x}" for c in classes for x in ("count", "pct"))]]
        for label in self.labels:
            row = [label]
            for c in classes:
                pct = self.percent(label, c)
                row += [str(self.count(label, c)), "" if pct != pct else f"{pct:.2f}"]
            out.append(row)
        return out


def classify_sequences(records: Sequence[SequenceRecord], group_names: Sequence[str],
                       depth: str = "first_hop") -> SequenceTable:
    """Distribution of appearance orders per news class.

    ``first_hop`` labels by the first two groups ("R only", "R→T");
    ``full`` keeps the whole order and only counts URLs present in every
    group. Every possible label is listed, zero counts included.
    """
    group_names = list(group_names)
    if depth == "first_hop":
        labels = []
        for g in group_names:
            labels.append(sequence_label([g], depth))
            labels += [sequence_label([g, h], depth) for h in group_names if h != g]
        selected = list(records)
    elif depth == "full":
        labels = [sequence_label(p, depth) for p in itertools.permutations(group_names)]
        full = set(group_names)
        selected = [r for r in records if set(r.groups) == full]
    else:
        raise ValueError(f"unknown depth {depth!r}")
    table = SequenceTable(depth, labels)
    for r in selected:
        table.counts.setdefault(r.news_class, Counter())[sequence_label(r.groups, depth)] += 1
        table.totals[r.news_class] = table.totals.get(r.news_class, 0) + 1
    return table


@dataclass
class FlowGraph:
    """Weighted first-hop flow: domain -> first group -> second group."""

    edges: Counter = field(default_factory=Counter)  # (kind, src, dst) -> unique URLs

    def weight(self, src: str, dst: str) -> int:
        return sum(w for (_, s, d), w in self.edges.items() if s == src and d == dst)

    @property
    def domain_nodes(self) -> list[str]:
        return sorted({s for (kind, s, _) in self.edges if kind == "domain"})

    @property
    def group_nodes(self) -> list[str]:
        return sorted({d for (_, _, d) in self.edges} |
                      {s for (kind, s, _) in self.edges if kind == "group"})


def build_flow_graph(records: Iterable[SequenceRecord]) -> FlowGraph:
    g = FlowGraph()
    for r in records:
        if not r.firsts:
            continue
        seq = r.groups
        if r.domain:
            g.edges[("domain", r.domain, seq[0])] += 1
        if len(seq) > 1:
            g.edges[("group", seq[0], seq[1])] += 1
    return g


def _dot_id(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: FlowGraph, name: str = "flow", max_penwidth: float = 10.0) -> str:
    """Graphviz DOT text; ``penwidth`` is proportional to the edge weight."""
    top = max(graph.edges.values(), default=1)
    lines = [f"digraph {_dot_id(name)} {{"]
    for d in graph.domain_nodes:
        lines.append(f"  {_dot_id('domain:' + d)} [label={_dot_id(d)}, shape=box];")
    for g in graph.group_nodes:
        lines.append(f"  {_dot_id('group:' + g)} [label={_dot_id(g)}, shape=ellipse];")
    for (kind, src, dst), w in sorted(graph.edges.items()):
        pen = max_penwidth * w / top
        lines.append(f"  {_dot_id(kind + ':' + src)} -> {_dot_id('group:' + dst)} "
                     f"[weight={w}, penwidth={pen:.4f}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def ecdf(values) -> list[tuple[float, float]]:
    """Distinct sorted values with their cumulative probability."""
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size == 0:
        return []
    uniq, idx = np.unique(v, return_index=True)
    # last index of each distinct value
    last = np.append(idx[1:], v.size)
    return list(zip(uniq.tolist(), (last / v.size).tolist()))
