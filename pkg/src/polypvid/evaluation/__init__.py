"""Frame matching, detection rates, latency measurement and n_prev curves."""

from polypvid.evaluation.curves import curve_report, curve_rows, read_csv, write_csv
from polypvid.evaluation.latency import LatencyStats, latency_probe
from polypvid.evaluation.matching import FrameMatch, MatchCriterion, match_frame
from polypvid.evaluation.metrics import (
    ConfusionCounts,
    MetricsReport,
    VideoResult,
    compute_metrics,
    evaluate_run,
    precision,
    sensitivity,
    specificity,
)

__all__ = [
    "ConfusionCounts",
    "FrameMatch",
    "LatencyStats",
    "MatchCriterion",
    "MetricsReport",
    "VideoResult",
    "compute_metrics",
    "curve_report",
    "curve_rows",
    "evaluate_run",
    "latency_probe",
    "match_frame",
    "precision",
    "read_csv",
    "sensitivity",
    "specificity",
    "write_csv",
]
