"""One run configuration shared by every CLI command.

A config file (YAML or JSON) holds any subset of the sections below. Missing keys
keep their defaults and unknown keys are rejected. Precedence, lowest first:
built-in defaults, the config file, ``--set section.key=value`` overrides, and
dedicated command flags such as ``--seed`` or ``--n-prev``.

Sections and defaults::

    seed: 0                      # drives synthesis, splits, init and batching
    out: out                     # output directory of the command (not stored in snapshots)
    data:
      root: null                 # dataset directory read by train/detect/eval
      train_ids: null            # videos used for training (null = all)
      eval_ids: null             # videos used by detect/eval (null = all)
      val_ratio: 0.85            # training share of the video-level split; 1.0 = no validation
    synth:    SyntheticSceneConfig fields (n_videos 10, video_length 50, 64x64, ...)
    model:
      preset: toy                # toy (64 px, 1/8 widths) or full (512 px ResNet34 widths)
      n_prev: 1
      pretrained_encoder: null   # path to a torch state_dict for the encoder
    train:    TrainConfig fields except seed (batch_size 10, lr_schedule [[20, 1e-4], [60, 1e-5]], ...)
    augment:  AugmentPolicy fields plus enabled: true
    preprocess:
      crop_threshold: 20         # target_size always follows the model input size
      mean / std: ImageNet statistics
    codec:
      peak_threshold: 0.4
      k_sigma: 4.0
    eval:
      mode: centroid             # or iou
      iou_threshold: 0.5
      latency_repetitions: 0     # > 0 adds a latency probe to report.json
    detect:
      overlays: false            # write annotated frames next to the JSONL
      heatmap_panel: true        # overlays get the raw heatmap as a side panel
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from polypvid.dataio.augment import AugmentPolicy
from polypvid.dataio.preprocess import IMAGENET_MEAN, IMAGENET_STD, PreprocessConfig
from polypvid.dataio.synthetic import SyntheticSceneConfig
from polypvid.errors import ConfigError
from polypvid.evaluation.matching import MatchCriterion
from polypvid.heatmap_codec import DEFAULT_K_SIGMA, DEFAULT_PEAK_THRESHOLD
from polypvid.model.network import ModelConfig
from polypvid.model.training import TrainConfig

SNAPSHOT = "config.json"


@dataclass(frozen=True)
class DataSection:
    root: str | None = None
    train_ids: tuple[str, ...] | None = None
    eval_ids: tuple[str, ...] | None = None
    val_ratio: float = 0.85

    def __post_init__(self):
        for name in ("train_ids", "eval_ids"):
            v = getattr(self, name)
            if v is not None:
                if isinstance(v, str):
                    raise ConfigError(f"data.{name} must be a list of video ids")
                object.__setattr__(self, name, tuple(str(x) for x in v))
        if not 0.0 < self.val_ratio <= 1.0:
            raise ConfigError("data.val_ratio must lie in (0, 1]")


@dataclass(frozen=True)
class ModelSection:
    preset: str = "toy"
    n_prev: int = 1
    pretrained_encoder: str | None = None

    def __post_init__(self):
        if self.preset not in ("toy", "full"):
            raise ConfigError(f"model.preset must be 'toy' or 'full', got {self.preset!r}")
        self.build(self.n_prev)  # validates n_prev

    def build(self, n_prev: int | None = None) -> ModelConfig:
        n = self.n_prev if n_prev is None else n_prev
        factory = ModelConfig.toy if self.preset == "toy" else ModelConfig.full
        return factory(n, pretrained_encoder=self.pretrained_encoder)


@dataclass(frozen=True)
class PreprocessSection:
    crop_threshold: float = 20.0
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        self.build(64)  # validates
        object.__setattr__(self, "mean", tuple(float(x) for x in self.mean))
        object.__setattr__(self, "std", tuple(float(x) for x in self.std))

    def build(self, target_size: int) -> PreprocessConfig:
        return PreprocessConfig(self.crop_threshold, target_size, self.mean, self.std)


@dataclass(frozen=True)
class CodecSection:
    peak_threshold: float = DEFAULT_PEAK_THRESHOLD
    k_sigma: float = DEFAULT_K_SIGMA

    def __post_init__(self):
        if not 0.0 < self.peak_threshold < 1.0:
            raise ConfigError("codec.peak_threshold must lie in (0, 1)")
        if self.k_sigma <= 0:
            raise ConfigError("codec.k_sigma must be positive")


@dataclass(frozen=True)
class EvalSection:
    mode: str = "centroid"
    iou_threshold: float = 0.5
    latency_repetitions: int = 0

    def __post_init__(self):
        self.criterion()
        if self.latency_repetitions < 0:
            raise ConfigError("eval.latency_repetitions must be >= 0")

    def criterion(self) -> MatchCriterion:
        return MatchCriterion(self.mode, self.iou_threshold)


@dataclass(frozen=True)
class DetectSection:
    overlays: bool = False
    heatmap_panel: bool = True


@dataclass(frozen=True)
class AugmentSection:
    enabled: bool = True
    policy: AugmentPolicy = field(default_factory=AugmentPolicy)

    def build(self) -> AugmentPolicy:
        return self.policy if self.enabled else AugmentPolicy.identity()


def _section(cls, raw, name: str, exclude: tuple[str, ...] = ()):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    allowed = {f.name for f in fields(cls)} - set(exclude)
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except TypeError as e:
        raise ConfigError(f"section {name!r}: {e}") from e


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "out"
    data: DataSection = field(default_factory=DataSection)
    synth: SyntheticSceneConfig = field(default_factory=SyntheticSceneConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentSection = field(default_factory=AugmentSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    codec: CodecSection = field(default_factory=CodecSection)
    eval: EvalSection = field(default_factory=EvalSection)
    detect: DetectSection = field(default_factory=DetectSection)

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
        seed = d.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        aug = dict(d.get("augment") or {})
        enabled = aug.pop("enabled", True)
        if not isinstance(enabled, bool):
            raise ConfigError("augment.enabled must be true or false")
        return cls(
            seed=seed,
            out=str(d.get("out", "out")),
            data=_section(DataSection, d.get("data"), "data"),
            synth=_section(SyntheticSceneConfig, d.get("synth"), "synth"),
            model=_section(ModelSection, d.get("model"), "model"),
            train=_section(TrainConfig, d.get("train"), "train", exclude=("seed",)),
            augment=AugmentSection(enabled, _section(AugmentPolicy, aug, "augment")),
            preprocess=_section(PreprocessSection, d.get("preprocess"), "preprocess"),
            codec=_section(CodecSection, d.get("codec"), "codec"),
            eval=_section(EvalSection, d.get("eval"), "eval"),
            detect=_section(DetectSection, d.get("detect"), "detect"),
        )

    def to_dict(self) -> dict:
        train = self.train.to_dict()
        train.pop("seed")
        return _plain({
            "seed": self.seed,
            "out": self.out,
            "data": asdict(self.data),
            "synth": asdict(self.synth),
            "model": asdict(self.model),
            "train": train,
            "augment": {"enabled": self.augment.enabled, **asdict(self.augment.policy)},
            "preprocess": asdict(self.preprocess),
            "codec": asdict(self.codec),
            "eval": asdict(self.eval),
            "detect": asdict(self.detect),
        })

    # resolved objects
    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed)

    def model_config(self, n_prev: int | None = None) -> ModelConfig:
        return self.model.build(n_prev)

    def preprocess_config(self, target_size: int | None = None) -> PreprocessConfig:
        return self.preprocess.build(target_size or self.model_config().input_size)

    def write_snapshot(self, out_dir: str | Path, extra: dict | None = None) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        # the output path is left out so identical runs give identical directories
        payload = self.to_dict()
        payload.pop("out")
        if extra:
            payload["resolved"] = _plain(extra)
        path = out_dir / SNAPSHOT
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


def load_config_dict(path: str | Path) -> dict:
    """Parse a YAML or JSON config file; the ``resolved`` block of a snapshot is ignored."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e})") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML/JSON ({e})") from e
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw.pop("resolved", None)
    return raw


def apply_override(d: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override; the value is parsed as YAML."""
    key, sep, value = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    parts = key.split(".")
    node = d
    for p in parts[:-1]:
        child = node.setdefault(p, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{key}: {p!r} is not a section")
        node = child
    try:
        node[parts[-1]] = yaml.safe_load(value)
    except yaml.YAMLError as e:
        raise ConfigError(f"{key}: cannot parse value {value!r}") from e
    return d
