"""Run configuration (TOML) with validation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .events import CommunityRegistry, GapSchedule
from .gibbs import GibbsSchedule, Priors
from .hawkes import LagKernelGrid, default_lag_edges
from .temporal import GroupMap


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    communities: list
    groups: dict = field(default_factory=dict)       # group name -> community names, ordered
    delta_t: int = 60
    delta_t_max: int = 720
    lag_edges: list | None = None
    gaps: list = field(default_factory=list)         # [{"community", "start", "end"}]
    required: list = field(default_factory=list)
    any_of: list = field(default_factory=list)
    drop_fraction: float = 0.10
    priors: Priors = field(default_factory=Priors)
    schedule: GibbsSchedule = field(default_factory=GibbsSchedule)
    seed: int = 0
    workers: int = 1
    strict: bool = False
    comparisons: list = field(default_factory=list)  # [[group_a, group_b], ...]

    def __post_init__(self):
        try:
            self.registry = CommunityRegistry(tuple(self.communities))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if len(self.registry) == 0:
            raise ConfigError("at least one community is required")
        if self.lag_edges is None:
            self.lag_edges = list(default_lag_edges(self.delta_t_max))
        if self.delta_t <= 0:
            raise ConfigError("delta_t must be positive")
        try:
            grid = LagKernelGrid(tuple(self.lag_edges))
        except ValueError as exc:
            raise ConfigError(f"lag_edges: {exc}") from None
        if grid.max_lag != self.delta_t_max:
            raise ConfigError(f"lag_edges end at {grid.edges[-1]}, expected delta_t_max + 1 = "
                              f"{self.delta_t_max + 1}")
        if not 0.0 <= self.drop_fraction <= 1.0:
            raise ConfigError("drop_fraction must be in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self._check_names("filter.required", self.required)
        self._check_names("filter.any_of", self.any_of)
        if set(self.required) & set(self.any_of):
            raise ConfigError("filter.required and filter.any_of overlap")
        for name, members in self.groups.items():
            self._check_names(f"groups.{name}", members)
        try:
            self.group_map = GroupMap.from_mapping(
                {g: self.registry.indices(m) for g, m in self.groups.items()})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for gap in self.gaps:
            self._check_names("gaps", [gap["community"]])
        try:
            self.gap_schedule = self._build_gaps()
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"gaps: {exc}") from None
        for pair in self.comparisons:
            if len(pair) != 2 or any(g not in self.groups for g in pair):
                raise ConfigError(f"comparison {pair!r} must name two configured groups")

    def _check_names(self, where, names):
        unknown = [n for n in names if n not in self.registry]
        if unknown:
            raise ConfigError(f"{where} references unknown communities: {unknown}")

    def _build_gaps(self) -> GapSchedule:
        by_k: dict = {}
        for gap in self.gaps:
            k = self.registry.index(gap["community"])
            by_k.setdefault(k, []).append((int(gap["start"]), int(gap["end"])))
        return GapSchedule(by_k)

    @property
    def grid(self) -> LagKernelGrid:
        return LagKernelGrid(tuple(self.lag_edges))

    @property
    def K(self) -> int:
        return len(self.registry)

    def group_pairs(self) -> list[tuple[str, str]]:
        if self.comparisons:
            return [tuple(p) for p in self.comparisons]
        names = list(self.groups)
        return [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]

    def to_dict(self) -> dict:
        return {
            "communities": list(self.communities),
            "groups": {k: list(v) for k, v in self.groups.items()},
            "delta_t": self.delta_t,
            "delta_t_max": self.delta_t_max,
            "lag_edges": list(self.lag_edges),
            "gaps": [dict(g) for g in self.gaps],
            "filter": {"required": list(self.required), "any_of": list(self.any_of)},
            "drop_fraction": self.drop_fraction,
            "priors": asdict(self.priors),
            "gibbs": asdict(self.schedule),
            "seed": self.seed,
            "strict": self.strict,
            "comparisons": [list(p) for p in self.comparisons],
        }

    def digest(self) -> str:
        """Hash of the resolved configuration (worker count excluded)."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {"communities", "groups", "delta_t", "delta_t_max", "lag_edges", "gaps",
                 "filter", "drop_fraction", "priors", "gibbs", "seed", "workers", "strict",
                 "comparisons"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "communities" not in d:
            raise ConfigError("config must list communities")
        filt = d.pop("filter", {}) or {}
        try:
            priors = Priors(**(d.pop("priors", {}) or {}))
            schedule = GibbsSchedule(**(d.pop("gibbs", {}) or {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        extra = set(filt) - {"required", "any_of"}
        if extra:
            raise ConfigError(f"unknown filter keys: {sorted(extra)}")
        return cls(required=list(filt.get("required", [])), any_of=list(filt.get("any_of", [])),
                   priors=priors, schedule=schedule, **d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, "rb") as f:
            try:
                data = tomllib.load(f)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)
