"""Bottleneck slot arithmetic and the per-stream buffer of previous-frame latents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Hashable

import numpy as np
import torch

from polypvid.errors import ConfigError, LayoutError, OrderingError

BOTTLENECK_CHANNELS = 256


@dataclass(frozen=True)
class SlotLayout:
    n_prev: int
    slots: int
    channels_per_slot: int
    total_channels: int

    def __str__(self) -> str:
        word = "slot" if self.slots == 1 else "slots"
        return f"{self.slots} {word} × {self.channels_per_slot} ch = {self.total_channels}"


def compute_slot_layout(n_prev: int, bottleneck_channels: int = BOTTLENECK_CHANNELS) -> SlotLayout:
    """Split the bottleneck between the current frame and ``n_prev`` previous ones.

    Non-integer shares are rounded up, so the total can exceed ``bottleneck_channels``
    (e.g. three slots of 86 give 258).
    """
    if isinstance(n_prev, bool) or int(n_prev) != n_prev or n_prev < 0:
        raise ConfigError(f"n_prev must be a non-negative integer, got {n_prev!r}")
    if bottleneck_channels < 1:
        raise ConfigError("bottleneck_channels must be positive")
    n_prev = int(n_prev)
    slots = n_prev + 1
    per_slot = math.ceil(bottleneck_channels / slots)
    return SlotLayout(n_prev, slots, per_slot, per_slot * slots)


@dataclass(frozen=True)
class LatentSlice:
    """One frame's bottleneck features; shape ``(..., channels, h, w)``."""

    features: Any
    frame_index: int
    stream_id: Hashable = 0

    @property
    def channels(self) -> int:
        return int(self.features.shape[-3])


@dataclass(frozen=True)
class ConcatenatedLatent:
    features: Any
    # frame index held by each slot, current frame first
    frame_indices: tuple[int, ...]


def _concat(parts: list) -> Any:
    if isinstance(parts[0], np.ndarray):
        return np.concatenate(parts, axis=-3)
    return torch.cat(parts, dim=-3)


@dataclass
class TemporalBuffer:
    """FIFO of the newest ``layout.n_prev`` latents of one stream, newest first.

    Not thread-safe: push to one buffer from a single thread at a time.
    """

    layout: SlotLayout
    stream_id: Hashable = 0
    entries: list[LatentSlice] = field(default_factory=list)

    @property
    def capacity(self) -> int:
        return self.layout.n_prev

    def __len__(self) -> int:
        return len(self.entries)

    def reset(self) -> "TemporalBuffer":
        self.entries.clear()
        return self

    def push_and_assemble(self, current: LatentSlice) -> ConcatenatedLatent:
        """Concatenate ``current`` with the buffered latents, then store it.

        Slots without a buffered frame (start of a stream, or a still image) repeat
        the oldest latent available, which is the current one on an empty buffer.
        """
        if current.stream_id != self.stream_id:
            raise OrderingError(
                f"slice from stream {current.stream_id!r} pushed to buffer of {self.stream_id!r}"
            )
        if current.channels != self.layout.channels_per_slot:
            raise LayoutError(
                f"slice has {current.channels} channels, layout expects "
                f"{self.layout.channels_per_slot}"
            )
        if self.entries:
            head = self.entries[0]
            if current.frame_index <= head.frame_index:
                raise OrderingError(
                    f"frame {current.frame_index} pushed after frame {head.frame_index}"
                )
            if tuple(current.features.shape) != tuple(head.features.shape):
                raise LayoutError(
                    f"slice shape {tuple(current.features.shape)} differs from buffered "
                    f"{tuple(head.features.shape)}"
                )

        history = self.entries[: self.capacity]
        oldest = history[-1] if history else current
        filler = [oldest] * (self.capacity - len(history))
        ordered = [current, *history, *filler]
        out = ConcatenatedLatent(
            features=_concat([s.features for s in ordered]),
            frame_indices=tuple(s.frame_index for s in ordered),
        )
        if self.capacity > 0:
            self.entries = [current, *history][: self.capacity]
        return out


def push_and_assemble(buffer: TemporalBuffer, current: LatentSlice) -> ConcatenatedLatent:
    return buffer.push_and_assemble(current)


def reset(buffer: TemporalBuffer) -> TemporalBuffer:
    return buffer.reset()
