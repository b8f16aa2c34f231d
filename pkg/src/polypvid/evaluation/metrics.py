"""Confusion counts, the three detection rates, and whole-run reports.

Units differ by count: ``tp``/``fp`` are boxes, ``fn`` is missed ground-truth
components (one per lesion per frame), ``tn`` is frames with neither lesion nor box.
Rates that would divide by zero are ``None``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from polypvid.dataio.dataset import NEGATIVE, POSITIVE, Dataset
from polypvid.errors import CoverageError, DataError
from polypvid.evaluation.matching import FrameMatch, MatchCriterion, match_frame
from polypvid.heatmap_codec import DetectionBox

FrameKey = tuple[str, int]


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    def add_frame(self, m: FrameMatch) -> None:
        self.tp += m.tp
        self.fp += m.fp
        self.fn += m.fn
        self.tn += int(m.tn)

    def to_dict(self) -> dict:
        return asdict(self)


def _pct(num: int, den: int) -> float | None:
    return None if den == 0 else num / den * 100.0


def sensitivity(c: ConfusionCounts) -> float | None:
    return _pct(c.tp, c.tp + c.fn)


def precision(c: ConfusionCounts) -> float | None:
    return _pct(c.tp, c.tp + c.fp)


def specificity(c: ConfusionCounts) -> float | None:
    return _pct(c.tn, c.tn + c.fp)


def compute_metrics(counts: ConfusionCounts) -> tuple[float | None, float | None, float | None]:
    """``(sensitivity, precision, specificity)`` in percent."""
    return sensitivity(counts), precision(counts), specificity(counts)


@dataclass
class VideoResult:
    label: str
    counts: ConfusionCounts
    flash_fp: int = 0  # false positives on frames with an injected flash


@dataclass
class MetricsReport:
    per_video: dict[str, VideoResult]
    positive: ConfusionCounts
    negative: ConfusionCounts
    total: ConfusionCounts
    sensitivity: float | None
    precision: float | None
    specificity: float | None
    n_prev: int | None = None
    latency_ms: dict | None = None
    criterion: dict = field(default_factory=dict)

    @property
    def flash_fp_negative(self) -> int:
        return sum(v.flash_fp for v in self.per_video.values() if v.label == NEGATIVE)

    def check_identities(self) -> bool:
        """Stored rates equal the rates recomputed from the stored counts."""
        return (
            self.sensitivity == sensitivity(self.positive)
            and self.precision == precision(self.positive)
            and self.specificity == specificity(self.negative)
        )

    def to_dict(self) -> dict:
        return {
            "n_prev": self.n_prev,
            "criterion": self.criterion,
            "sensitivity": self.sensitivity,
            "precision": self.precision,
            "specificity": self.specificity,
            "positive": self.positive.to_dict(),
            "negative": self.negative.to_dict(),
            "total": self.total.to_dict(),
            "flash_fp_negative": self.flash_fp_negative,
            "latency_ms": self.latency_ms,
            "per_video": {
                vid: {"label": r.label, "flash_fp": r.flash_fp, **r.counts.to_dict()}
                for vid, r in self.per_video.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        per_video = {}
        for vid, r in d["per_video"].items():
            counts = ConfusionCounts(r["tp"], r["fp"], r["tn"], r["fn"])
            per_video[vid] = VideoResult(r["label"], counts, r.get("flash_fp", 0))
        return cls(
            per_video=per_video,
            positive=ConfusionCounts(**d["positive"]),
            negative=ConfusionCounts(**d["negative"]),
            total=ConfusionCounts(**d["total"]),
            sensitivity=d["sensitivity"],
            precision=d["precision"],
            specificity=d["specificity"],
            n_prev=d.get("n_prev"),
            latency_ms=d.get("latency_ms"),
            criterion=d.get("criterion", {}),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise DataError(f"{path}: not a metrics report ({e})") from e


def evaluate_run(
    detections: Mapping[FrameKey, Sequence[DetectionBox]],
    dataset: Dataset,
    criterion: MatchCriterion = MatchCriterion(),
    n_prev: int | None = None,
) -> MetricsReport:
    """Match every frame and aggregate; positive videos feed sensitivity and
    precision, negative videos feed specificity."""
    missing = [
        (v.video_id, t) for v in dataset for t in range(len(v)) if (v.video_id, t) not in detections
    ]
    if missing:
        head = ", ".join(f"{vid}#{t}" for vid, t in missing[:5])
        raise CoverageError(f"{len(missing)} frames have no detections entry (e.g. {head})")

    per_video = {}
    for v in dataset:
        counts = ConfusionCounts()
        flash_fp = 0
        flashes = set(v.flash_frames)
        for t in range(len(v)):
            m = match_frame(detections[(v.video_id, t)], v.masks[t], criterion)
            counts.add_frame(m)
            if t in flashes:
                flash_fp += m.fp
        per_video[v.video_id] = VideoResult(v.label, counts, flash_fp)

    positive, negative = ConfusionCounts(), ConfusionCounts()
    for r in per_video.values():
        if r.label == POSITIVE:
            positive = positive + r.counts
        else:
            negative = negative + r.counts
    return MetricsReport(
        per_video=per_video,
        positive=positive,
        negative=negative,
        total=positive + negative,
        sensitivity=sensitivity(positive),
        precision=precision(positive),
        specificity=specificity(negative),
        n_prev=n_prev,
        criterion=asdict(criterion),
    )
