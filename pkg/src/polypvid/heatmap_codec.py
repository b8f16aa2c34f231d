"""Gaussian heatmap targets from binary masks, and NMS-free box decoding.

Coordinates follow image conventions: ``x`` is the column index, ``y`` the row
index, and integer coordinates sit on pixel centres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage

from polypvid.errors import InvalidRegionError, ShapeError

# box edge sits at 2 sigma from the centre
SIGMA_DIVISOR = 4.0
DEFAULT_PEAK_THRESHOLD = 0.4
DEFAULT_K_SIGMA = 4.0

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class GroundTruthRegion:
    cx: float
    cy: float
    w_box: float
    h_box: float
    area: int = 0

    @property
    def sigma_x(self) -> float:
        return self.w_box / SIGMA_DIVISOR

    @property
    def sigma_y(self) -> float:
        return self.h_box / SIGMA_DIVISOR


@dataclass(frozen=True)
class DetectionBox:
    cx: float
    cy: float
    width: float
    height: float
    confidence: float

    def to_dict(self) -> dict:
        return {
            "cx": self.cx,
            "cy": self.cy,
            "w": self.width,
            "h": self.height,
            "score": self.confidence,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionBox":
        return cls(
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=float(d["w"]),
            height=float(d["h"]),
            confidence=float(d["score"]),
        )

    def corners(self) -> tuple[float, float, float, float]:
        """Return ``(x0, y0, x1, y1)``."""
        hw, hh = self.width / 2.0, self.height / 2.0
        return self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh


def binarize_mask(mask: np.ndarray, level: int = 127) -> np.ndarray:
    """Map an 8-bit single-channel mask image to {0, 1} (pixels > level are 1)."""
    mask = np.asarray(mask)
    if mask.ndim == 3:
        mask = mask[..., 0]
    if mask.dtype == bool:
        return mask.astype(np.uint8)
    return (mask > level).astype(np.uint8)


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected component labelling; labels start at 1."""
    labels, n = ndimage.label(np.asarray(mask) > 0, structure=EIGHT_CONNECTED)
    return labels, int(n)


def extract_regions(mask: np.ndarray) -> list[GroundTruthRegion]:
    """One region per 8-connected component, described by its tight box."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {mask.shape}")
    labels, n = label_components(mask)
    regions = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        rows, cols = sl
        y0, y1 = rows.start, rows.stop - 1
        x0, x1 = cols.start, cols.stop - 1
        area = int(np.count_nonzero(labels[sl] == i))
        regions.append(
            GroundTruthRegion(
                cx=(x0 + x1) / 2.0,
                cy=(y0 + y1) / 2.0,
                w_box=float(x1 - x0 + 1),
                h_box=float(y1 - y0 + 1),
                area=area,
            )
        )
    return regions


def encode_gaussian(
    regions: Iterable[GroundTruthRegion], width: int, height: int
) -> np.ndarray:
    """Render regions as 2D Gaussians (peak 1, sigma = box size / 4), combined by max.

    Returns a float64 array of shape ``(height, width)`` with values in [0, 1].
    """
    target = np.zeros((height, width), dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    for r in regions:
        if r.w_box < 1 or r.h_box < 1:
            raise InvalidRegionError(
                f"region box must be at least 1x1 px, got {r.w_box}x{r.h_box}"
            )
        gx = np.exp(-((xs - r.cx) ** 2) / (2.0 * r.sigma_x**2))
        gy = np.exp(-((ys - r.cy) ** 2) / (2.0 * r.sigma_y**2))
        np.maximum(target, np.outer(gy, gx), out=target)
    return target


def mask_to_target(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    h, w = mask.shape
    return encode_gaussian(extract_regions(mask), w, h)


def truncated_variance_factor(rho: float) -> float:
    """Per-axis variance of a 2D Gaussian cut at ``rho`` times its peak, in units of sigma^2.

    Weighting by the Gaussian value itself, the support ``exp(-r^2/2) > rho`` keeps
    ``1 + rho * ln(rho) / (1 - rho)`` of the untruncated variance.
    """
    if rho <= 0.0:
        return 1.0
    if rho >= 1.0:
        return 0.0
    return 1.0 + rho * math.log(rho) / (1.0 - rho)


def decode_heatmap(
    heatmap: np.ndarray,
    peak_threshold: float = DEFAULT_PEAK_THRESHOLD,
    k_sigma: float = DEFAULT_K_SIGMA,
    min_sigma: float = 0.5,
) -> list[DetectionBox]:
    """Turn every super-threshold 8-connected component into exactly one box.

    The confidence is the component maximum and the centre is where it occurs
    (value-weighted centroid when the maximum is shared). Box size comes from the
    value-weighted second central moments, corrected for the truncation of the
    Gaussian at ``peak_threshold``, times ``k_sigma``. No suppression step exists:
    overlapping or neighbouring boxes are all returned.
    """
    if not 0.0 < peak_threshold < 1.0:
        raise ValueError(f"peak_threshold must lie in (0, 1), got {peak_threshold}")
    heat = np.clip(np.asarray(heatmap, dtype=np.float64), 0.0, 1.0)
    if heat.ndim != 2:
        raise ShapeError(f"heatmap must be 2-D, got shape {heat.shape}")

    labels, _ = ndimage.label(heat > peak_threshold, structure=EIGHT_CONNECTED)
    boxes = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        comp = labels[sl] == i
        vals = np.where(comp, heat[sl], 0.0)
        yy, xx = np.nonzero(comp)
        w = vals[yy, xx]
        xx = xx + sl[1].start
        yy = yy + sl[0].start

        peak = float(w.max())
        at_peak = w == peak
        pw = w[at_peak]
        cx = float(np.sum(pw * xx[at_peak]) / pw.sum())
        cy = float(np.sum(pw * yy[at_peak]) / pw.sum())

        total = w.sum()
        mx = np.sum(w * xx) / total
        my = np.sum(w * yy) / total
        var_x = float(np.sum(w * (xx - mx) ** 2) / total)
        var_y = float(np.sum(w * (yy - my) ** 2) / total)
        factor = truncated_variance_factor(peak_threshold / peak)
        if factor > 0.0:
            var_x /= factor
            var_y /= factor
        sx = max(math.sqrt(var_x), min_sigma)
        sy = max(math.sqrt(var_y), min_sigma)
        boxes.append(DetectionBox(cx, cy, k_sigma * sx, k_sigma * sy, peak))
    return boxes
