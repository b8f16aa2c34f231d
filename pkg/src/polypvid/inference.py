"""Frame-by-frame detection over videos, with boxes mapped back to source pixels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from polypvid.dataio.dataset import Video
from polypvid.dataio.preprocess import (
    PreprocessConfig,
    crop_bounds,
    normalize,
    resize_frame,
    to_chw,
)
from polypvid.errors import DegenerateCropError
from polypvid.heatmap_codec import DetectionBox, decode_heatmap
from polypvid.model.network import TemporalEncoderDecoder


@dataclass(frozen=True)
class FrameGeometry:
    """Maps model-input coordinates back to the source frame."""

    top: int
    left: int
    scale_y: float
    scale_x: float

    def to_source(self, b: DetectionBox) -> DetectionBox:
        return DetectionBox(
            cx=self.left + (b.cx + 0.5) * self.scale_x - 0.5,
            cy=self.top + (b.cy + 0.5) * self.scale_y - 0.5,
            width=b.width * self.scale_x,
            height=b.height * self.scale_y,
            confidence=b.confidence,
        )


def prepare_frame(frame: np.ndarray, config: PreprocessConfig):
    h, w = frame.shape[:2]
    try:
        t, b, l, r = crop_bounds(frame, config.crop_threshold)
    except DegenerateCropError:
        t, b, l, r = 0, h, 0, w
    crop = frame[t:b, l:r]
    size = config.target_size
    x = torch.from_numpy(to_chw(normalize(resize_frame(crop, size), config)))
    return x, FrameGeometry(t, l, (b - t) / size, (r - l) / size)


@torch.no_grad()
def detect_video(
    model: TemporalEncoderDecoder,
    video: Video,
    config: PreprocessConfig,
    peak_threshold: float = 0.4,
    k_sigma: float = 4.0,
) -> tuple[list[list[DetectionBox]], list[np.ndarray]]:
    """Boxes (source coordinates) and raw heatmaps for every frame of ``video``.

    Stills and new videos start from an empty buffer, so warm-up slots repeat
    the earliest frame seen.
    """
    model.eval()
    prepared = [prepare_frame(f, config) for f in video.frames]
    heatmaps = model.forward_stream([p[0] for p in prepared], model.new_buffer(video.video_id))
    boxes, maps = [], []
    for (_, geo), hm in zip(prepared, heatmaps):
        hm = hm.numpy()
        maps.append(hm)
        boxes.append([geo.to_source(b) for b in decode_heatmap(hm, peak_threshold, k_sigma)])
    return boxes, maps
