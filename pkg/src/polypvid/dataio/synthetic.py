"""Synthetic endoscopy-like videos: drifting tissue texture, moving elliptical lesions,
and single-frame distractor flashes that never appear in the masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from polypvid.dataio.dataset import Dataset, Video
from polypvid.errors import ConfigError


@dataclass(frozen=True)
class SyntheticSceneConfig:
    n_videos: int = 10
    video_length: int = 50
    height: int = 64
    width: int = 64
    negative_fraction: float = 0.5
    blob_count_range: tuple[int, int] = (1, 1)
    blob_size_range: tuple[float, float] = (5.0, 11.0)  # semi-axes, px
    speed_range: tuple[float, float] = (0.3, 1.5)  # px / frame
    texture_seed: int = 0
    flash_probability: float = 0.1
    flash_size_range: tuple[float, float] = (5.0, 11.0)
    noise_sigma: float = 2.0
    canvas_border: int = 0
    n_stills: int = 0

    def __post_init__(self):
        for name in ("blob_count_range", "blob_size_range", "speed_range", "flash_size_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n_videos < 0 or self.n_stills < 0 or self.video_length < 1:
            raise ConfigError("n_videos/n_stills must be >= 0 and video_length >= 1")
        if not 0.0 <= self.flash_probability <= 1.0:
            raise ConfigError("flash_probability must lie in [0, 1]")
        if not 0.0 <= self.negative_fraction <= 1.0:
            raise ConfigError("negative_fraction must lie in [0, 1]")
        lo, hi = self.blob_count_range
        if lo < 1 or hi < lo:
            raise ConfigError("blob_count_range must satisfy 1 <= lo <= hi")
        for name in ("blob_size_range", "speed_range", "flash_size_range"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise ConfigError(f"{name} must be positive and ordered")
        if 2 * self.blob_size_range[1] + 2 * self.canvas_border + 4 > min(self.height, self.width):
            raise ConfigError("blobs do not fit inside the frame")


_TISSUE = np.array([150.0, 62.0, 52.0])
_LESION = np.array([212.0, 150.0, 128.0])


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    base = ndimage.gaussian_filter(rng.normal(size=(h, w)), 4.0)
    fine = ndimage.gaussian_filter(rng.normal(size=(h, w)), 1.0)
    base /= base.std() + 1e-9
    fine /= fine.std() + 1e-9
    shade = 1.0 + 0.12 * base + 0.05 * fine
    tint = _TISSUE * rng.uniform(0.85, 1.15, size=3)
    return shade[..., None] * tint


def _ellipse(h, w, cx, cy, a, b, theta):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    c, s = np.cos(theta), np.sin(theta)
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    return u * u + v * v  # <= 1 inside


def _paint(img, r2, color):
    inside = r2 <= 1.0
    # dome shading with a bright cap
    shade = 0.8 + 0.35 * (1.0 - r2) + 0.25 * np.exp(-r2 / 0.05)
    img[inside] = (shade[..., None] * color)[inside]
    return inside


class _Blob:
    def __init__(self, rng, cfg: SyntheticSceneConfig, h, w):
        self.a = rng.uniform(*cfg.blob_size_range)
        self.b = rng.uniform(*cfg.blob_size_range)
        self.theta = rng.uniform(0, np.pi)
        r = max(self.a, self.b) + 1 + cfg.canvas_border
        self.lo = np.array([r, r])
        self.hi = np.array([w - 1 - r, h - 1 - r])
        self.pos = rng.uniform(self.lo, self.hi)
        speed = rng.uniform(*cfg.speed_range)
        ang = rng.uniform(0, 2 * np.pi)
        self.vel = speed * np.array([np.cos(ang), np.sin(ang)])
        self.spin = rng.normal(0, 0.02)
        self.color = _LESION * rng.uniform(0.9, 1.1, size=3)

    def step(self, rng):
        self.vel = self.vel + rng.normal(0, 0.05, size=2)
        self.pos = self.pos + self.vel
        for k in range(2):
            if self.pos[k] < self.lo[k] or self.pos[k] > self.hi[k]:
                self.vel[k] = -self.vel[k]
                self.pos[k] = np.clip(self.pos[k], self.lo[k], self.hi[k])
        self.theta += self.spin


def _render_video(rng, cfg: SyntheticSceneConfig, n_blobs: int, length: int, flashes: bool):
    h, w = cfg.height, cfg.width
    pad = 16
    tex = _texture(rng, h + 2 * pad, w + 2 * pad)
    drift = rng.uniform(-0.4, 0.4, size=2)
    offset = np.array([pad, pad], dtype=np.float64)
    blobs = [_Blob(rng, cfg, h, w) for _ in range(n_blobs)]
    frames = np.zeros((length, h, w, 3), np.uint8)
    masks = np.zeros((length, h, w), np.uint8)
    flash_frames = []
    for t in range(length):
        if t:
            offset = np.clip(offset + drift, 0, 2 * pad)
            for bl in blobs:
                bl.step(rng)
        oy, ox = int(round(offset[1])), int(round(offset[0]))
        img = tex[oy:oy + h, ox:ox + w].copy()
        mask = np.zeros((h, w), bool)
        for bl in blobs:
            mask |= _paint(img, _ellipse(h, w, bl.pos[0], bl.pos[1], bl.a, bl.b, bl.theta), bl.color)
        if flashes and rng.random() < cfg.flash_probability:
            keep_out = ndimage.binary_dilation(mask, iterations=3)
            for _ in range(20):
                a, b = rng.uniform(*cfg.flash_size_range, size=2)
                r = max(a, b) + 1 + cfg.canvas_border
                cx, cy = rng.uniform(r, w - 1 - r), rng.uniform(r, h - 1 - r)
                r2 = _ellipse(h, w, cx, cy, a, b, rng.uniform(0, np.pi))
                if not (keep_out & (r2 <= 1.0)).any():
                    _paint(img, r2, _LESION * rng.uniform(0.9, 1.1, size=3))
                    flash_frames.append(t)
                    break
        if cfg.noise_sigma > 0:
            img = img + rng.normal(0, cfg.noise_sigma, size=img.shape)
        if cfg.canvas_border:
            cb = cfg.canvas_border
            img[:cb], img[-cb:], img[:, :cb], img[:, -cb:] = 0, 0, 0, 0
        frames[t] = np.clip(np.round(img), 0, 255).astype(np.uint8)
        masks[t] = mask
    return frames, masks, tuple(flash_frames)


def generate_synthetic(config: SyntheticSceneConfig, seed: int = 0) -> Dataset:
    """Render ``config.n_videos`` videos (plus ``n_stills`` stills); fully determined by ``seed``."""
    root = np.random.SeedSequence([seed, config.texture_seed])
    children = root.spawn(config.n_videos + config.n_stills + 1)
    plan_rng = np.random.default_rng(children[0])
    n_neg = int(round(config.negative_fraction * config.n_videos))
    negative = np.zeros(config.n_videos, bool)
    negative[plan_rng.permutation(config.n_videos)[:n_neg]] = True

    videos = []
    for i in range(config.n_videos):
        rng = np.random.default_rng(children[1 + i])
        n_blobs = 0 if negative[i] else int(rng.integers(config.blob_count_range[0],
                                                        config.blob_count_range[1] + 1))
        frames, masks, flashes = _render_video(rng, config, n_blobs, config.video_length, True)
        videos.append(Video(f"vid{i:03d}", frames, masks, False,
                            "negative" if negative[i] else "positive", flashes))
    for j in range(config.n_stills):
        rng = np.random.default_rng(children[1 + config.n_videos + j])
        frames, masks, _ = _render_video(rng, config, 1, 1, False)
        videos.append(Video(f"still{j:03d}", frames, masks, True, "positive"))
    return Dataset(videos)
