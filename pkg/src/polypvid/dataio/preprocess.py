from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from polypvid.errors import ConfigError, DegenerateCropError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class PreprocessConfig:
    crop_threshold: float = 20.0
    target_size: int = 512
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(x) for x in self.mean))
        object.__setattr__(self, "std", tuple(float(x) for x in self.std))
        if self.target_size % 64:
            raise ConfigError(f"target_size must be divisible by 64, got {self.target_size}")
        if len(self.mean) != 3 or len(self.std) != 3 or min(self.std) <= 0:
            raise ConfigError("mean/std need three entries and positive stds")
        if not 0 <= self.crop_threshold <= 255:
            raise ConfigError("crop_threshold must lie in [0, 255]")


def crop_bounds(frame: np.ndarray, threshold: float) -> tuple[int, int, int, int]:
    """``(top, bottom, left, right)`` after peeling dark border rows and columns.

    An edge row or column of the remaining region is removed while its mean
    intensity is below ``threshold``.
    """
    gray = np.asarray(frame, dtype=np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    top, bottom, left, right = 0, gray.shape[0], 0, gray.shape[1]
    while top < bottom and left < right:
        region = gray[top:bottom, left:right]
        if region[0].mean() < threshold:
            top += 1
        elif region[-1].mean() < threshold:
            bottom -= 1
        elif region[:, 0].mean() < threshold:
            left += 1
        elif region[:, -1].mean() < threshold:
            right -= 1
        else:
            return top, bottom, left, right
    raise DegenerateCropError("frame is dark everywhere; nothing left after cropping")


def crop_canvas(frame: np.ndarray, mask: np.ndarray, threshold: float = 20.0):
    t, b, l, r = crop_bounds(frame, threshold)
    return frame[t:b, l:r], mask[t:b, l:r]


def resize_frame(frame: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize to ``size x size``; returns float32 RGB in [0, 1]."""
    f = np.asarray(frame, dtype=np.float32)
    if frame.dtype == np.uint8:
        f = f / 255.0
    if f.shape[:2] != (size, size):
        f = cv2.resize(f, (size, size), interpolation=cv2.INTER_LINEAR)
    return np.clip(f, 0.0, 1.0)


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    if m.shape != (size, size):
        m = cv2.resize(m, (size, size), interpolation=cv2.INTER_NEAREST)
    return m


def normalize(frame01: np.ndarray, config: PreprocessConfig) -> np.ndarray:
    mean = np.asarray(config.mean, dtype=np.float32)
    std = np.asarray(config.std, dtype=np.float32)
    return ((np.asarray(frame01, dtype=np.float32) - mean) / std).astype(np.float32)


def preprocess(frame: np.ndarray, mask: np.ndarray, config: PreprocessConfig):
    """Resize (bilinear frame, nearest mask), scale to [0, 1] and standardise per channel.

    ``frame`` is uint8 in [0, 255] or float already in [0, 1].
    """
    f = resize_frame(frame, config.target_size)
    return normalize(f, config), resize_mask(mask, config.target_size)


def to_chw(frame: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(frame, (2, 0, 1)))
