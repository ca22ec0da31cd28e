"""Experiment configuration: nested dataclasses addressable by dotted ``key=value`` lines."""

import dataclasses
import typing
from dataclasses import dataclass, field

from .asr import AsrConfig
from .corpus import FeatureConfig, SyntheticSpec
from .enhancement import EnhancementConfig
from .fusion import MODES, FusionConfig

AUGMENTS = ("none", "specaugment")


class ConfigError(ValueError):
    """Bad key, bad value, or inconsistent settings."""


@dataclass
class TrainConfig:
    enh_steps: int = 500
    asr_steps: int = 1500
    joint_steps: int = 600
    batch_size: int = 1
    warmup: int = 400
    lr_factor: float = 0.2
    clip_norm: float = 5.0
    log_every: int = 10
    checkpoint_every: int = 0
    nan_patience: int = 10


@dataclass
class MixConfig:
    train_snr_low: float = 0.0
    train_snr_high: float = 20.0
    eval_snrs: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    noise_seconds: float = 4.0


@dataclass
class PathsConfig:
    data_dir: str = "data"
    manifest: str = "manifest.jsonl"
    vocab: str = "vocab.txt"
    noise_dir: str = "noise"
    out_dir: str = "runs"


@dataclass
class ExperimentConfig:
    mode: str = "grf"
    alpha: float = 1.0
    augment: str = "none"
    time_mask: int = 15
    freq_mask: int = 27
    mct: bool = True
    seed: int = 0
    seeds: tuple = (0, 1, 2)
    beam: int = 5
    length_norm: bool = True
    snr_fuse_db: float = None
    corpus: SyntheticSpec = field(default_factory=lambda: SyntheticSpec(utterances=80, test_utterances=30))
    mix: MixConfig = field(default_factory=MixConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    enh: EnhancementConfig = field(default_factory=EnhancementConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    asr: AsrConfig = field(default_factory=AsrConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.augment not in AUGMENTS:
            raise ConfigError(f"augment must be one of {AUGMENTS}")
        if not self.alpha >= 0:
            raise ConfigError("alpha must be >= 0")
        if self.beam < 1:
            raise ConfigError("beam must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.train.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        return self


def _convert(raw, typ, key):
    origin = typing.get_origin(typ)
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return None if raw.strip().lower() in ("", "none") else float(raw)
        if typ is tuple or origin is tuple:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(int(s) if s.lstrip("-").isdigit() else float(s) for s in items)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from exc


def _field_types(obj):
    hints = typing.get_type_hints(type(obj))
    return {f.name: hints.get(f.name, str) for f in dataclasses.fields(obj)}


def set_value(cfg, dotted, raw):
    """Assign a string value to the (possibly nested) field named by ``dotted``."""
    *path, leaf = dotted.split(".")
    target = cfg
    for part in path:
        if not dataclasses.is_dataclass(target) or not hasattr(target, part):
            raise ConfigError(f"unknown config key {dotted!r}")
        target = getattr(target, part)
    if not dataclasses.is_dataclass(target):
        raise ConfigError(f"unknown config key {dotted!r}")
    types = _field_types(target)
    if leaf not in types or dataclasses.is_dataclass(getattr(target, leaf)):
        raise ConfigError(f"unknown config key {dotted!r}")
    typ = types[leaf]
    current = getattr(target, leaf)
    if typ is float and current is None:
        typ = float
    object.__setattr__(target, leaf, _convert(raw, typ, dotted))


def parse_config_text(text, cfg=None):
    cfg = cfg or ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        set_value(cfg, key, value)
    _revalidate(cfg)
    return cfg.validate()


def load_config(path, cfg=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), cfg)


def _revalidate(cfg):
    # nested configs validate in __post_init__; rerun it after string assignment
    for sub in (cfg.corpus, cfg.enh, cfg.fusion, cfg.asr):
        try:
            sub.__post_init__()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def flatten(cfg, prefix=""):
    """Dotted ``key -> value`` view of a config tree (inverse of :func:`parse_config_text`)."""
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(value):
            out.update(flatten(value, key + "."))
        else:
            out[key] = value
    return out


def dump_config_text(cfg):
    lines = []
    for key, value in flatten(cfg).items():
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
