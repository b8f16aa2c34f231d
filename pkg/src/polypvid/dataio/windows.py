from __future__ import annotations

from typing import Iterator

import numpy as np

from polypvid.dataio.dataset import Dataset, Sample, Video
from polypvid.errors import ConfigError
from polypvid.heatmap_codec import mask_to_target


def window_indices(video: Video, t: int, n_prev: int) -> list[int]:
    """Frame indices of the window ending at ``t``, current first.

    Stills are their own history; early video frames repeat frame 0.
    """
    if not 0 <= t < len(video):
        raise IndexError(f"frame {t} outside video {video.video_id} of length {len(video)}")
    if video.is_still:
        return [t] * (n_prev + 1)
    return [max(t - j, 0) for j in range(n_prev + 1)]


def window_sampler(dataset: Dataset, n_prev: int) -> Iterator[tuple[list[Sample], np.ndarray]]:
    """Yield ``(window, target)`` for every frame; target is the current frame's Gaussian map."""
    for video in dataset:
        for t in range(len(video)):
            window = [video.sample(i) for i in window_indices(video, t, n_prev)]
            yield window, mask_to_target(video.masks[t])


def split_train_val(dataset: Dataset, ratio: float = 0.85, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random split by video (each still counts as its own unit)."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(dataset)
    if n < 2:
        raise ConfigError("need at least two videos to split")
    n_train = min(max(int(round(ratio * n)), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    train_idx = set(order[:n_train].tolist())
    train = [v for i, v in enumerate(dataset.videos) if i in train_idx]
    val = [v for i, v in enumerate(dataset.videos) if i not in train_idx]
    return Dataset(train), Dataset(val)
