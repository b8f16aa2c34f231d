from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from polypvid.errors import ConfigError, ShapeError
from polypvid.heatmap_codec import DetectionBox, extract_regions, label_components

CENTROID = "centroid"
IOU = "iou"


@dataclass(frozen=True)
class MatchCriterion:
    mode: str = CENTROID
    iou_threshold: float = 0.5

    def __post_init__(self):
        if self.mode not in (CENTROID, IOU):
            raise ConfigError(f"mode must be {CENTROID!r} or {IOU!r}, got {self.mode!r}")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ConfigError("iou_threshold must lie in (0, 1]")


class FrameMatch(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: bool


def _pixel(v: float, size: int) -> int:
    return min(max(int(math.floor(v + 0.5)), 0), size - 1)


def _by_confidence(boxes):
    # stable order independent of the caller's ordering
    return sorted(boxes, key=lambda b: (-b.confidence, b.cx, b.cy, b.width, b.height))


def _iou(a: tuple, b: tuple) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def match_frame(
    boxes: Sequence[DetectionBox], gt_mask: np.ndarray, criterion: MatchCriterion = MatchCriterion()
) -> FrameMatch:
    """Count TP/FP boxes and missed components for one frame.

    Each ground-truth component absorbs at most one box (the most confident);
    surplus boxes on a matched component are false positives.
    """
    gt_mask = np.asarray(gt_mask)
    if gt_mask.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {gt_mask.shape}")
    h, w = gt_mask.shape
    labels, n_comp = label_components(gt_mask)
    if n_comp == 0:
        return FrameMatch(0, len(boxes), 0, len(boxes) == 0)

    matched: set[int] = set()
    fp = 0
    if criterion.mode == CENTROID:
        for b in _by_confidence(boxes):
            comp = int(labels[_pixel(b.cy, h), _pixel(b.cx, w)])
            if comp == 0 or comp in matched:
                fp += 1
            else:
                matched.add(comp)
    else:
        gt_boxes = []
        for r in extract_regions(gt_mask):
            gt_boxes.append((r.cx - r.w_box / 2, r.cy - r.h_box / 2,
                             r.cx + r.w_box / 2, r.cy + r.h_box / 2))
        for b in _by_confidence(boxes):
            bc = b.corners()
            best, best_iou = None, criterion.iou_threshold
            for i, g in enumerate(gt_boxes):
                if i in matched:
                    continue
                v = _iou(bc, g)
                if v >= best_iou:
                    best, best_iou = i, v
            if best is None:
                fp += 1
            else:
                matched.add(best)
    return FrameMatch(len(matched), fp, n_comp - len(matched), False)
