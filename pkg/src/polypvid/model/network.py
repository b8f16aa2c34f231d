"""Residual encoder / upsampling decoder with a temporally concatenated bottleneck."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from polypvid.errors import ConfigError, LayoutError, ShapeError
from polypvid.temporal import (
    BOTTLENECK_CHANNELS,
    LatentSlice,
    SlotLayout,
    TemporalBuffer,
    compute_slot_layout,
)

# stem conv, stem pool, three strided stages, bottleneck pool
TOTAL_STRIDE = 64


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 512
    stage_widths: tuple[int, ...] = (64, 128, 256, 512)
    stage_blocks: tuple[int, ...] = (3, 4, 6, 3)
    # one entry per upsampling step, deepest first
    decoder_widths: tuple[int, ...] = (256, 256, 128, 64, 32, 32)
    bottleneck_channels: int = BOTTLENECK_CHANNELS
    n_prev: int = 0
    scale: str = "full"
    pretrained_encoder: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "stage_widths", tuple(self.stage_widths))
        object.__setattr__(self, "stage_blocks", tuple(self.stage_blocks))
        object.__setattr__(self, "decoder_widths", tuple(self.decoder_widths))
        if self.input_size % TOTAL_STRIDE:
            raise ConfigError(f"input_size must be divisible by {TOTAL_STRIDE}, got {self.input_size}")
        if len(self.stage_widths) != 4 or len(self.stage_blocks) != 4:
            raise ConfigError("exactly four residual stages are required")
        if len(self.decoder_widths) != 6:
            raise ConfigError("decoder_widths needs six entries (one per 2x upsampling)")
        if self.scale not in ("full", "toy"):
            raise ConfigError(f"scale must be 'full' or 'toy', got {self.scale!r}")
        compute_slot_layout(self.n_prev, self.bottleneck_channels)

    @property
    def layout(self) -> SlotLayout:
        return compute_slot_layout(self.n_prev, self.bottleneck_channels)

    @property
    def latent_size(self) -> int:
        return self.input_size // TOTAL_STRIDE

    @classmethod
    def full(cls, n_prev: int = 0, **kw) -> "ModelConfig":
        return cls(n_prev=n_prev, **kw)

    @classmethod
    def toy(cls, n_prev: int = 0, **kw) -> "ModelConfig":
        """Widths divided by 8, one block per stage, 64x64 input."""
        params = dict(
            input_size=64,
            stage_widths=(8, 16, 32, 64),
            stage_blocks=(1, 1, 1, 1),
            decoder_widths=(32, 32, 16, 8, 8, 8),
            scale="toy",
        )
        params.update(kw)
        return cls(n_prev=n_prev, **params)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("stage_widths", "stage_blocks", "decoder_widths"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class BasicBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout)
            )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        idt = x if self.shortcut is None else self.shortcut(x)
        return F.relu(out + idt)


def _stage(cin: int, cout: int, blocks: int, stride: int) -> nn.Sequential:
    layers = [BasicBlock(cin, cout, stride)]
    layers += [BasicBlock(cout, cout, 1) for _ in range(blocks - 1)]
    return nn.Sequential(*layers)


class DecoderBlock(nn.Module):
    """2x upsample, concatenate the skip, then two padded 3x3 conv + ReLU."""

    def __init__(self, cin: int, cskip: int, cout: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin + cskip, cout, 3, 1, 1)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1)

    def forward(self, x, skip=None):
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        return F.relu(self.conv2(F.relu(self.conv1(x))))


def channel_pool_matrix(out_channels: int, in_channels: int) -> torch.Tensor:
    """Fixed averaging map over contiguous channel groups (adaptive-pool boundaries)."""
    m = torch.zeros(out_channels, in_channels)
    for i in range(out_channels):
        lo = (i * in_channels) // out_channels
        hi = -((-(i + 1) * in_channels) // out_channels)
        m[i, lo:hi] = 1.0 / (hi - lo)
    return m


class TemporalEncoderDecoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.layout = config.layout
        w = config.stage_widths
        self.stem = nn.Sequential(
            nn.Conv2d(3, w[0], 7, 2, 3, bias=False), nn.BatchNorm2d(w[0]), nn.ReLU()
        )
        self.stem_pool = nn.MaxPool2d(3, 2, 1)
        self.stages = nn.ModuleList(
            _stage(w[i - 1] if i else w[0], w[i], config.stage_blocks[i], 1 if i == 0 else 2)
            for i in range(4)
        )
        self.bottleneck_pool = nn.MaxPool2d(2)
        self.to_bottleneck = nn.Conv2d(w[3], config.bottleneck_channels, 1)
        # parameter-free, so the parameter count does not depend on n_prev
        self.register_buffer(
            "slot_pool",
            channel_pool_matrix(self.layout.channels_per_slot, config.bottleneck_channels),
        )

        skips = [w[3], w[2], w[1], w[0], w[0], 0]
        d = config.decoder_widths
        cins = [self.layout.total_channels, *d[:-1]]
        self.decoder = nn.ModuleList(DecoderBlock(cins[i], skips[i], d[i]) for i in range(6))
        self.head = nn.Conv2d(d[-1], 1, 1)
        self.encode_calls = 0

    # -- encoder ---------------------------------------------------------
    def encode(self, frames: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Frames ``(B, 3, S, S)`` -> slot-width latent ``(B, C_slot, S/64, S/64)`` and skips.

        Skips are ordered deepest first to line up with the decoder blocks.
        """
        s = self.config.input_size
        if frames.ndim != 4 or tuple(frames.shape[1:]) != (3, s, s):
            raise ShapeError(f"expected frames of shape (B, 3, {s}, {s}), got {tuple(frames.shape)}")
        self.encode_calls += frames.shape[0]
        x0 = self.stem(frames)
        x = self.stem_pool(x0)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        z = self.to_bottleneck(self.bottleneck_pool(x))
        if self.layout.channels_per_slot != self.config.bottleneck_channels:
            z = torch.einsum("oc,bchw->bohw", self.slot_pool, z)
        skips = [feats[3], feats[2], feats[1], feats[0], x0]
        return z, skips

    # -- decoder ---------------------------------------------------------
    def decode(self, latent: torch.Tensor, skips: Sequence[torch.Tensor]) -> torch.Tensor:
        """Concatenated latent + current-frame skips -> heatmap ``(B, 1, S, S)`` in [0, 1]."""
        expect = self.layout.total_channels
        if latent.ndim != 4 or latent.shape[1] != expect:
            raise ShapeError(f"latent must have {expect} channels, got shape {tuple(latent.shape)}")
        if len(skips) != 5:
            raise ShapeError("decode needs the five skip tensors returned by encode")
        x = latent
        for i, block in enumerate(self.decoder):
            skip = skips[i] if i < 5 else None
            if skip is not None and skip.shape[-2:] != (x.shape[-2] * 2, x.shape[-1] * 2):
                raise ShapeError(f"skip {i} has spatial size {tuple(skip.shape[-2:])}")
            x = block(x, skip)
        # tanh head; negatives clamped so outputs live in the target range
        return torch.tanh(self.head(x)).clamp(min=0.0)

    def forward(self, window: torch.Tensor) -> torch.Tensor:
        """Stateless path for training: ``window`` is ``(B, slots, 3, S, S)``, current first.

        Previous frames are encoded without gradient, matching inference where
        their latents come from the buffer.
        """
        if window.ndim != 5 or window.shape[1] != self.layout.slots:
            raise ShapeError(
                f"window must be (B, {self.layout.slots}, 3, S, S), got {tuple(window.shape)}"
            )
        z, skips = self.encode(window[:, 0])
        parts = [z]
        if self.layout.n_prev:
            b, k = window.shape[:2]
            with torch.no_grad():
                prev, _ = self.encode(window[:, 1:].reshape(b * (k - 1), *window.shape[2:]))
            prev = prev.reshape(b, k - 1, *prev.shape[1:])
            parts += [prev[:, j] for j in range(k - 1)]
        return self.decode(torch.cat(parts, dim=1), skips)

    @torch.no_grad()
    def forward_stream(
        self, frames: Iterable[torch.Tensor], buffer: TemporalBuffer, start_index: int = 0
    ) -> list[torch.Tensor]:
        """Run a stream frame by frame; each frame is encoded exactly once.

        ``frames`` yields ``(3, S, S)`` tensors. Returns one ``(S, S)`` heatmap per frame.
        """
        if buffer.layout != self.layout:
            raise LayoutError(f"buffer layout {buffer.layout} does not match model {self.layout}")
        out = []
        for i, frame in enumerate(frames, start=start_index):
            z, skips = self.encode(frame.unsqueeze(0))
            cat = buffer.push_and_assemble(LatentSlice(z, i, buffer.stream_id))
            out.append(self.decode(cat.features, skips)[0, 0])
        return out

    def new_buffer(self, stream_id=0) -> TemporalBuffer:
        return TemporalBuffer(self.layout, stream_id)


def count_trainable_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def build_model(config: ModelConfig, seed: int | None = None) -> TemporalEncoderDecoder:
    if seed is not None:
        torch.manual_seed(seed)
    model = TemporalEncoderDecoder(config)
    if config.pretrained_encoder:
        from polypvid.model.checkpoint import load_checkpoint

        load_encoder_weights(model, load_checkpoint(config.pretrained_encoder).tensors)
    return model


def load_encoder_weights(model: TemporalEncoderDecoder, tensors: dict[str, np.ndarray]) -> list[str]:
    """Copy externally supplied encoder weights whose names and shapes match."""
    own = model.state_dict()
    loaded = []
    for name, arr in tensors.items():
        if not name.startswith(("stem.", "stages.")) or name not in own:
            continue
        if tuple(own[name].shape) != tuple(arr.shape):
            continue
        own[name].copy_(torch.as_tensor(np.asarray(arr), dtype=own[name].dtype))
        loaded.append(name)
    return loaded
