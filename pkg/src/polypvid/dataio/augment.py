"""Window-coherent augmentation: one geometric draw per window, photometric on frames only."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from polypvid.errors import ConfigError


@dataclass(frozen=True)
class AugmentPolicy:
    rotation_deg: float = 15.0
    p_rotate: float = 0.5
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    p_zoom_in: float = 0.2
    zoom_in_max: float = 0.25
    p_zoom_out: float = 0.4
    zoom_out_max: float = 0.5
    p_color: float = 0.5
    hue_shift_deg: float = 8.0
    saturation_scale: float = 0.15
    value_scale: float = 0.15

    def __post_init__(self):
        probs = (self.p_rotate, self.p_hflip, self.p_vflip, self.p_zoom_in,
                 self.p_zoom_out, self.p_color)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ConfigError("augmentation probabilities must lie in [0, 1]")
        if not 0.0 <= self.zoom_in_max <= 0.25:
            raise ConfigError("zoom_in_max must lie in [0, 0.25]")
        if not 0.0 <= self.zoom_out_max <= 0.5:
            raise ConfigError("zoom_out_max must lie in [0, 0.5]")
        if self.p_zoom_in + self.p_zoom_out > 1.0:
            raise ConfigError("p_zoom_in + p_zoom_out must not exceed 1")
        if self.p_zoom_in > 0 and self.p_zoom_in >= self.p_zoom_out:
            raise ConfigError("zoom-in must be drawn less often than zoom-out")

    @classmethod
    def identity(cls) -> "AugmentPolicy":
        return cls(p_rotate=0, p_hflip=0, p_vflip=0, p_zoom_in=0, p_zoom_out=0, p_color=0)


@dataclass(frozen=True)
class GeometricDraw:
    angle: float = 0.0
    scale: float = 1.0
    hflip: bool = False
    vflip: bool = False

    @property
    def is_identity(self) -> bool:
        return self.angle == 0.0 and self.scale == 1.0 and not self.hflip and not self.vflip

    @property
    def zoom(self) -> str:
        if self.scale > 1.0:
            return "in"
        if self.scale < 1.0:
            return "out"
        return "none"


@dataclass(frozen=True)
class ColorDraw:
    hue: float = 0.0
    saturation: float = 1.0
    value: float = 1.0

    @property
    def is_identity(self) -> bool:
        return self.hue == 0.0 and self.saturation == 1.0 and self.value == 1.0


def draw_geometry(policy: AugmentPolicy, rng: np.random.Generator) -> GeometricDraw:
    angle = 0.0
    if rng.random() < policy.p_rotate:
        angle = float(rng.uniform(-policy.rotation_deg, policy.rotation_deg))
    hflip = bool(rng.random() < policy.p_hflip)
    vflip = bool(rng.random() < policy.p_vflip)
    u = rng.random()
    scale = 1.0
    if u < policy.p_zoom_in:
        scale = 1.0 + float(rng.uniform(0.0, policy.zoom_in_max))
    elif u < policy.p_zoom_in + policy.p_zoom_out:
        scale = 1.0 - float(rng.uniform(0.0, policy.zoom_out_max))
    return GeometricDraw(angle, scale, hflip, vflip)


def draw_color(policy: AugmentPolicy, rng: np.random.Generator) -> ColorDraw:
    if not rng.random() < policy.p_color:
        return ColorDraw()
    return ColorDraw(
        hue=float(rng.uniform(-policy.hue_shift_deg, policy.hue_shift_deg)),
        saturation=float(1.0 + rng.uniform(-policy.saturation_scale, policy.saturation_scale)),
        value=float(1.0 + rng.uniform(-policy.value_scale, policy.value_scale)),
    )


def affine_matrix(draw: GeometricDraw, height: int, width: int) -> np.ndarray:
    """2x3 forward map (source -> destination pixel coordinates) about the image centre."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    m = cv2.getRotationMatrix2D((cx, cy), draw.angle, draw.scale)
    m = np.vstack([m, [0.0, 0.0, 1.0]])
    flip = np.eye(3)
    if draw.hflip:
        flip[0, 0], flip[0, 2] = -1.0, width - 1.0
    if draw.vflip:
        flip[1, 1], flip[1, 2] = -1.0, height - 1.0
    return (m @ flip)[:2]


def apply_geometry(frame: np.ndarray, mask: np.ndarray, draw: GeometricDraw):
    if draw.is_identity:
        return frame, mask
    h, w = mask.shape[:2]
    if draw.angle == 0.0 and draw.scale == 1.0:
        f, m = frame, mask
        if draw.hflip:
            f, m = f[:, ::-1], m[:, ::-1]
        if draw.vflip:
            f, m = f[::-1], m[::-1]
        return np.ascontiguousarray(f), np.ascontiguousarray(m)
    mat = affine_matrix(draw, h, w)
    f = cv2.warpAffine(frame, mat, (w, h), flags=cv2.INTER_LINEAR,
                       borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    m = cv2.warpAffine(np.ascontiguousarray(mask, dtype=np.uint8), mat, (w, h),
                       flags=cv2.INTER_NEAREST, borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    return f, m


def apply_color(frame: np.ndarray, draw: ColorDraw) -> np.ndarray:
    """HSV jitter. ``frame`` is uint8 or float32 RGB in [0, 1]; dtype is preserved."""
    if draw.is_identity:
        return frame
    is_u8 = frame.dtype == np.uint8
    f = frame.astype(np.float32) / 255.0 if is_u8 else frame.astype(np.float32)
    hsv = cv2.cvtColor(f, cv2.COLOR_RGB2HSV)  # H in [0, 360)
    hsv[..., 0] = np.mod(hsv[..., 0] + draw.hue, 360.0)
    hsv[..., 1] = np.clip(hsv[..., 1] * draw.saturation, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * draw.value, 0.0, 1.0)
    out = np.clip(cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB), 0.0, 1.0)
    if is_u8:
        return np.round(out * 255.0).astype(np.uint8)
    return out


def augment_window(frames, masks, policy: AugmentPolicy, rng: np.random.Generator):
    """Apply one geometric draw to every frame and mask of a window, one colour draw to frames.

    Returns new lists; masks stay binary (nearest-neighbour warping).
    """
    if len(frames) != len(masks):
        raise ValueError("frames and masks must have equal length")
    geo = draw_geometry(policy, rng)
    col = draw_color(policy, rng)
    out_f, out_m = [], []
    for f, m in zip(frames, masks):
        f, m = apply_geometry(f, m, geo)
        out_f.append(apply_color(f, col))
        out_m.append(m)
    return out_f, out_m
