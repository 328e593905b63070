"""Run configuration: YAML file, command-line overrides, frozen resolved copy.

Precedence, lowest to highest: dataclass defaults, the YAML file,
``--set section.key=value`` overrides, then dedicated flags such as
``--seed`` and ``--out-dir``. The resolved result is written next to the
run outputs as ``config.resolved.yaml``; feeding that file back in
reproduces the run.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .audio_io import Manifest, parse_protocol
from .distill import DistillConfig
from .errors import ConfigError
from .features import StftConfig
from .freqmix import FreqmixConfig
from .metrics import PRESETS
from .model import ModelConfig
from .rawboost import RawboostConfig

MODES = ("tea_r", "tea_fr", "tea_c_stu_r", "fkd")
RESOLVED_NAME = "config.resolved.yaml"


@dataclass
class PathsConfig:
    train: str | None = None
    train_audio: str | None = None
    val: str | None = None
    val_audio: str | None = None
    eval: str | None = None
    eval_audio: str | None = None
    out_dir: str | None = None
    # teacher checkpoint for distillation; if unset a teacher is pretrained first
    teacher: str | None = None


@dataclass
class ScoringConfig:
    score_type: str = "logit"
    tdcf_preset: str = "asvspoof2021"

    def __post_init__(self):
        if self.score_type not in ("logit", "llr"):
            raise ConfigError(f"metrics.score_type must be 'logit' or 'llr', got {self.score_type!r}")
        if self.tdcf_preset not in PRESETS:
            raise ConfigError(f"metrics.tdcf_preset must be one of {sorted(PRESETS)}")


@dataclass
class RunConfig:
    mode: str = "fkd"
    seed: int = 1
    pretrain_epochs: int = 10
    # false disables the Rawboost front end for every pipeline
    use_rawboost: bool = True
    paths: PathsConfig = field(default_factory=PathsConfig)
    rawboost: RawboostConfig = field(default_factory=RawboostConfig)
    freqmix: FreqmixConfig = field(default_factory=FreqmixConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    metrics: ScoringConfig = field(default_factory=ScoringConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs must be >= 0")
        # the run seed drives every stream; keep the nested copy in sync
        self.distill = dataclasses.replace(self.distill, seed=self.seed)

    @property
    def rawboost_or_none(self) -> RawboostConfig | None:
        return self.rawboost if self.use_rawboost else None

    def manifest(self, which: str, required: bool = True) -> Manifest | None:
        path = getattr(self.paths, which)
        if path is None:
            if required:
                raise ConfigError(f"paths.{which} is required for this command")
            return None
        if not Path(path).is_file():
            raise ConfigError(f"paths.{which}: no such protocol file {path!r}")
        return parse_protocol(path, getattr(self.paths, f"{which}_audio"))

    def out_dir(self) -> Path:
        if self.paths.out_dir is None:
            raise ConfigError("paths.out_dir is required for this command")
        return Path(self.paths.out_dir)


def _plain(value):
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    return value


def to_dict(cfg: RunConfig) -> dict:
    return _plain(cfg)


def _build(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config field {where + key!r}")
        current = getattr(defaults, key)
        if dataclasses.is_dataclass(current):
            kwargs[key] = _build(type(current), value, f"{where}{key}.")
        elif isinstance(current, tuple):
            kwargs[key] = tuple(value)
        elif isinstance(current, bool) and not isinstance(value, bool):
            raise ConfigError(f"{where}{key}: expected true/false, got {value!r}")
        elif isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
            kwargs[key] = float(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where or 'config'}: {e}") from None


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def _set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r}: {k} is not a section")
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    """``section.key=value``; the value is parsed as a YAML scalar or list."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def load(path=None, overrides=(), **flags) -> RunConfig:
    """Resolve a RunConfig from an optional YAML file, overrides and flags.

    ``flags`` are dotted keys (``seed``, ``paths.out_dir``, ...) whose value
    is applied last unless it is None.
    """
    data = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path}: top level must be a mapping")
        # paths written in a file are relative to that file
        _absolute_paths(data, Path(path).resolve().parent)
    for item in overrides:
        _set_path(data, *parse_override(item))
    for key, value in flags.items():
        if value is not None:
            _set_path(data, key, value)
    _absolute_paths(data, Path.cwd())
    return from_dict(data)


def _absolute_paths(data: dict, base: Path) -> None:
    paths = data.get("paths")
    if not isinstance(paths, dict):
        return
    for key, value in paths.items():
        if isinstance(value, str) and not Path(value).is_absolute():
            paths[key] = str((base / value).resolve())


def dump(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True, default_flow_style=False)


def write_resolved(cfg: RunConfig, out_dir) -> Path:
    path = Path(out_dir) / RESOLVED_NAME
    path.write_text(dump(cfg))
    return path
