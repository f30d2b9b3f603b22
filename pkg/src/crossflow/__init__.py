"""Cross-community influence estimation with discrete-time Hawkes processes."""
from .estimator import DiscreteHawkes
from .events import (BinnedCounts, CommunityRegistry, GapSchedule, NewsClass, RawEvent,
                     UrlSeries, bin_series, drop_gap_overlapping, filter_cross_platform,
                     group_by_url, parse_events)
from .gibbs import GibbsSchedule, Priors, PosteriorSummary, fit, sample_parents
from .hawkes import (HawkesParams, LagKernelGrid, compute_rates, impulse, log_likelihood,
                     simulate, spectral_radius)
from .influence import (build_report, influence_percentage, ks_two_sample, mean_weight_matrix,
                        significance_stars)

__all__ = [
    "BinnedCounts", "CommunityRegistry", "DiscreteHawkes", "GapSchedule", "GibbsSchedule",
    "HawkesParams", "LagKernelGrid", "NewsClass", "PosteriorSummary", "Priors", "RawEvent",
    "UrlSeries", "bin_series", "build_report", "compute_rates", "drop_gap_overlapping", "filter_cross_platform",
    "fit", "group_by_url", "impulse", "influence_percentage", "ks_two_sample", "log_likelihood",
    "mean_weight_matrix", "parse_events", "sample_parents", "significance_stars", "simulate",
    "spectral_radius",
]
