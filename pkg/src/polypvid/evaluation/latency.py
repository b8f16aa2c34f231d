from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import torch

from polypvid.errors import ConfigError


@dataclass
class LatencyStats:
    mean_ms: float
    sd_ms: float
    per_repetition_ms: list[float]
    frames: int

    def to_dict(self) -> dict:
        return asdict(self)


def latency_probe(model, stream: Sequence[torch.Tensor], repetitions: int = 5, warmup: int = 1) -> LatencyStats:
    """Per-frame wall time of ``forward_stream`` over ``stream``.

    ``warmup`` passes run first and are discarded. Run on an otherwise idle host.
    """
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if not len(stream):
        raise ConfigError("stream must contain at least one frame")
    model.eval()
    for _ in range(warmup):
        model.forward_stream(stream, model.new_buffer())
    per_rep = []
    for _ in range(repetitions):
        buf = model.new_buffer()
        t0 = time.perf_counter()
        model.forward_stream(stream, buf)
        per_rep.append((time.perf_counter() - t0) * 1000.0 / len(stream))
    sd = statistics.stdev(per_rep) if len(per_rep) > 1 else 0.0
    return LatencyStats(statistics.fmean(per_rep), sd, per_rep, len(stream))
