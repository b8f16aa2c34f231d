"""In-memory video datasets and their on-disk layout.

Layout::

    <root>/manifest.json
    <root>/<video_id>/frames/000000.png   RGB
    <root>/<video_id>/masks/000000.png    single channel, > 127 is foreground
    <root>/<video_id>/still.flag          present for still images (one-frame videos)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from polypvid.errors import DataError
from polypvid.heatmap_codec import binarize_mask

MANIFEST = "manifest.json"
STILL_FLAG = "still.flag"
POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass
class Sample:
    frame: np.ndarray
    mask: np.ndarray
    video_id: str
    frame_index: int
    is_still: bool = False


@dataclass
class Video:
    video_id: str
    frames: np.ndarray  # (T, H, W, 3) uint8
    masks: np.ndarray  # (T, H, W) uint8 in {0, 1}
    is_still: bool = False
    label: str | None = None
    flash_frames: tuple[int, ...] = ()

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise DataError(f"{self.video_id}: frames must be (T, H, W, 3), got {self.frames.shape}")
        if self.masks.shape != self.frames.shape[:3]:
            raise DataError(
                f"{self.video_id}: masks {self.masks.shape} do not match frames {self.frames.shape}"
            )
        if self.is_still and len(self.frames) != 1:
            raise DataError(f"{self.video_id}: a still must hold exactly one frame")
        if self.label is None:
            self.label = POSITIVE if self.masks.any() else NEGATIVE
        self.flash_frames = tuple(int(i) for i in self.flash_frames)

    def __len__(self) -> int:
        return len(self.frames)

    def sample(self, i: int) -> Sample:
        return Sample(self.frames[i], self.masks[i], self.video_id, i, self.is_still)


@dataclass
class Dataset:
    videos: list[Video] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.videos)

    def __iter__(self) -> Iterator[Video]:
        return iter(self.videos)

    def __getitem__(self, video_id: str) -> Video:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(video_id)

    @property
    def video_ids(self) -> list[str]:
        return [v.video_id for v in self.videos]

    @property
    def n_frames(self) -> int:
        return sum(len(v) for v in self.videos)

    def samples(self) -> Iterator[Sample]:
        for v in self.videos:
            for i in range(len(v)):
                yield v.sample(i)

    def manifest(self) -> dict:
        return {
            "format": 1,
            "videos": [
                {
                    "id": v.video_id,
                    "frames": len(v),
                    "label": v.label,
                    "still": v.is_still,
                    "flash_frames": list(v.flash_frames),
                }
                for v in self.videos
            ],
        }


def save_dataset(dataset: Dataset, root: str | Path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for v in dataset:
        fdir = root / v.video_id / "frames"
        mdir = root / v.video_id / "masks"
        fdir.mkdir(parents=True, exist_ok=True)
        mdir.mkdir(parents=True, exist_ok=True)
        for i in range(len(v)):
            Image.fromarray(v.frames[i]).save(fdir / f"{i:06d}.png")
            Image.fromarray((v.masks[i] > 0).astype(np.uint8) * 255).save(mdir / f"{i:06d}.png")
        flag = root / v.video_id / STILL_FLAG
        if v.is_still:
            flag.touch()
        elif flag.exists():
            flag.unlink()
    (root / MANIFEST).write_text(json.dumps(dataset.manifest(), indent=2) + "\n")
    return root


def _read_video(vdir: Path, entry: dict | None) -> Video:
    frame_files = sorted((vdir / "frames").glob("*.png"))
    if not frame_files:
        raise DataError(f"{vdir}: no frames found")
    frames, masks = [], []
    for f in frame_files:
        frame = np.asarray(Image.open(f).convert("RGB"))
        mpath = vdir / "masks" / f.name
        if mpath.exists():
            mask = binarize_mask(np.asarray(Image.open(mpath).convert("L")))
        else:
            raise DataError(f"{vdir}: missing mask for {f.name}")
        frames.append(frame)
        masks.append(mask)
    entry = entry or {}
    if "frames" in entry and entry["frames"] != len(frames):
        raise DataError(f"{vdir}: manifest lists {entry['frames']} frames, found {len(frames)}")
    return Video(
        video_id=vdir.name,
        frames=np.stack(frames),
        masks=np.stack(masks),
        is_still=(vdir / STILL_FLAG).exists(),
        label=entry.get("label"),
        flash_frames=tuple(entry.get("flash_frames", ())),
    )


def load_dataset(root: str | Path, video_ids: list[str] | None = None) -> Dataset:
    """Read a dataset directory. Without a manifest, every sub-directory with frames is a video."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    mpath = root / MANIFEST
    if mpath.exists():
        entries = {e["id"]: e for e in json.loads(mpath.read_text())["videos"]}
        ids = list(entries)
    else:
        entries = {}
        ids = sorted(p.name for p in root.iterdir() if (p / "frames").is_dir())
    if video_ids is not None:
        missing = set(video_ids) - set(ids)
        if missing:
            raise DataError(f"{root}: unknown video ids {sorted(missing)}")
        ids = list(video_ids)
    return Dataset([_read_video(root / i, entries.get(i)) for i in ids])
