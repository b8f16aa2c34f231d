"""Seeded training loop: Adam, stepwise learning-rate schedule, best-by-validation checkpoint."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch

from polypvid.dataio.augment import AugmentPolicy, augment_window
from polypvid.dataio.dataset import Dataset
from polypvid.dataio.preprocess import (
    PreprocessConfig,
    crop_canvas,
    normalize,
    resize_frame,
    resize_mask,
    to_chw,
)
from polypvid.dataio.windows import window_indices
from polypvid.errors import ConfigError, DegenerateCropError
from polypvid.heatmap_codec import mask_to_target
from polypvid.model.checkpoint import Checkpoint
from polypvid.model.loss import l2_loss
from polypvid.model.network import ModelConfig, TemporalEncoderDecoder, build_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 10
    # (last epoch, learning rate) pairs, epochs counted from 1
    lr_schedule: tuple[tuple[int, float], ...] = ((20, 1e-4), (60, 1e-5))
    epochs: int | None = None
    seed: int = 0
    samples_per_epoch: int | None = None
    val_batch_size: int = 32

    def __post_init__(self):
        sched = tuple((int(e), float(lr)) for e, lr in self.lr_schedule)
        object.__setattr__(self, "lr_schedule", sched)
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not sched:
            raise ConfigError("lr_schedule must not be empty")
        ends = [e for e, _ in sched]
        if any(b <= a for a, b in zip(ends, ends[1:])) or ends[0] < 1:
            raise ConfigError("lr_schedule epochs must be positive and strictly increasing")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    @property
    def total_epochs(self) -> int:
        return self.epochs if self.epochs is not None else self.lr_schedule[-1][0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_schedule"] = [list(x) for x in self.lr_schedule]
        return d


def lr_at(epoch: int, schedule) -> float:
    """Learning rate of a 1-based epoch; the last rate holds past the final boundary."""
    for last, lr in schedule:
        if epoch <= last:
            return lr
    return schedule[-1][1]


class FrameCache:
    """Cropped and resized frames ([0, 1] float32) and masks, built once per dataset."""

    def __init__(self, dataset: Dataset, config: PreprocessConfig):
        self.videos = list(dataset)
        self.config = config
        self.frames, self.masks = [], []
        for v in self.videos:
            fs, ms = [], []
            for f, m in zip(v.frames, v.masks):
                try:
                    f, m = crop_canvas(f, m, config.crop_threshold)
                except DegenerateCropError:
                    pass
                fs.append(resize_frame(f, config.target_size))
                ms.append(resize_mask(m, config.target_size))
            self.frames.append(np.stack(fs))
            self.masks.append(np.stack(ms))
        self.items = [(vi, t) for vi, v in enumerate(self.videos) for t in range(len(v))]

    def __len__(self) -> int:
        return len(self.items)

    def window(self, item, n_prev: int, policy: AugmentPolicy | None, rng):
        vi, t = item
        idx = window_indices(self.videos[vi], t, n_prev)
        frames = [self.frames[vi][i] for i in idx]
        masks = [self.masks[vi][i] for i in idx]
        if policy is not None:
            frames, masks = augment_window(frames, masks, policy, rng)
        x = np.stack([to_chw(normalize(f, self.config)) for f in frames])
        y = mask_to_target(masks[0]).astype(np.float32)
        return x, y

    def batch(self, items, n_prev, policy=None, rng=None):
        xs, ys = zip(*(self.window(it, n_prev, policy, rng) for it in items))
        return torch.from_numpy(np.stack(xs)), torch.from_numpy(np.stack(ys))[:, None]


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float | None
    seconds: float


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best: Checkpoint | None = None
    last: Checkpoint | None = None
    model: TemporalEncoderDecoder | None = None


@torch.no_grad()
def evaluate_loss(model, cache: FrameCache, n_prev: int, batch_size: int) -> float:
    model.eval()
    total, count = 0.0, 0
    for i in range(0, len(cache), batch_size):
        items = cache.items[i:i + batch_size]
        x, y = cache.batch(items, n_prev)
        total += float(l2_loss(y, model(x))) * len(items)
        count += len(items)
    return total / max(count, 1)


def train(
    train_set: Dataset,
    val_set: Dataset | None,
    model_config: ModelConfig,
    train_config: TrainConfig = TrainConfig(),
    preprocess_config: PreprocessConfig | None = None,
    augment_policy: AugmentPolicy | None = None,
    resume: Checkpoint | None = None,
    on_epoch: Callable[[EpochRecord, Checkpoint], None] | None = None,
    run_config: dict | None = None,
) -> TrainResult:
    """Train from scratch (or continue ``resume``) and keep the lowest-validation-loss weights."""
    if len(train_set) == 0 or train_set.n_frames == 0:
        raise ConfigError("training dataset is empty")
    preprocess_config = preprocess_config or PreprocessConfig(target_size=model_config.input_size)
    if preprocess_config.target_size != model_config.input_size:
        raise ConfigError("preprocess target_size must equal the model input_size")
    policy = augment_policy if augment_policy is not None else AugmentPolicy()
    torch.use_deterministic_algorithms(True)

    n_prev = model_config.n_prev
    model = build_model(model_config, seed=train_config.seed)
    start = 1
    best_score = float("inf")
    if resume is not None:
        model.load_state_dict(resume.state_dict())
        start = resume.epoch + 1
        if resume.val_loss is not None:
            best_score = resume.val_loss
    opt = torch.optim.Adam(model.parameters(), lr=lr_at(start, train_config.lr_schedule))

    train_cache = FrameCache(train_set, preprocess_config)
    val_cache = FrameCache(val_set, preprocess_config) if val_set is not None and len(val_set) else None
    snapshot = {
        "model": model_config.to_dict(),
        "train": train_config.to_dict(),
        "preprocess": asdict(preprocess_config),
    }
    if run_config is not None:
        snapshot["run"] = run_config

    result = TrainResult(model=model)
    if resume is not None:
        result.best = resume
    for epoch in range(start, train_config.total_epochs + 1):
        t0 = time.perf_counter()
        lr = lr_at(epoch, train_config.lr_schedule)
        for group in opt.param_groups:
            group["lr"] = lr
        rng = np.random.default_rng([train_config.seed, epoch])
        order = rng.permutation(len(train_cache))
        if train_config.samples_per_epoch:
            order = order[: train_config.samples_per_epoch]
        model.train()
        running, seen = 0.0, 0
        for i in range(0, len(order), train_config.batch_size):
            items = [train_cache.items[j] for j in order[i:i + train_config.batch_size]]
            x, y = train_cache.batch(items, n_prev, policy, rng)
            opt.zero_grad()
            loss = l2_loss(y, model(x))
            loss.backward()
            opt.step()
            running += float(loss.detach()) * len(items)
            seen += len(items)
        train_loss = running / seen
        val_loss = (
            evaluate_loss(model, val_cache, n_prev, train_config.val_batch_size)
            if val_cache is not None else None
        )
        rec = EpochRecord(epoch, lr, train_loss, val_loss, time.perf_counter() - t0)
        result.history.append(rec)
        log.info("epoch %d lr %.1e train %.6f val %s", epoch, lr, train_loss, val_loss)

        ckpt = Checkpoint.from_model(model, snapshot, epoch, val_loss)
        result.last = ckpt
        score = val_loss if val_loss is not None else train_loss
        if score < best_score:
            best_score = score
            result.best = ckpt
        if on_epoch is not None:
            on_epoch(rec, ckpt)
    return result


def model_from_checkpoint(ckpt: Checkpoint) -> TemporalEncoderDecoder:
    config = ModelConfig.from_dict({**ckpt.config["model"], "pretrained_encoder": None})
    model = TemporalEncoderDecoder(config)
    model.load_state_dict(ckpt.state_dict())
    model.eval()
    return model
