"""Line-oriented ``section.key=value`` run configuration.

Example::

    # comments and blank lines are ignored
    data.manifest=synth/manifest.tsv
    data.split=shape
    net.num_heads=5
    train.lr=0.0005
    train.epochs=50

Sequence values are comma separated (``net.encoder_channels=16,32,64``);
``auto`` restores a head-count dependent default (batch size, gt policy).
Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .gmm import BACKGROUND_FLOOR, DISCARD_NLL
from .regressor.network import NetworkConfig
from .regressor.training import TrainConfig

SPLIT_NAMES = {"image": "image_wise", "object": "object_wise", "shape": "shape_wise"}

_ALIASES = {
    "train.lr": "train.learning_rate",
    "train.wd": "train.weight_decay",
    "net.heads": "net.num_heads",
}


@dataclass
class DataSettings:
    manifest: str = ""
    split: str = "shape"
    fold: int = 0
    split_seed: int = 0


@dataclass
class EvalSettings:
    discard_nll: float = DISCARD_NLL
    background_floor: float = BACKGROUND_FLOOR


@dataclass
class RunSettings:
    data: DataSettings = field(default_factory=DataSettings)
    net: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)

    @property
    def split_mode(self):
        return SPLIT_NAMES[self.data.split]


def parse_lines(text, source="<config>"):
    """``key=value`` pairs in file order; later keys win."""
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        pairs[key] = value
    return pairs


def _convert(value, default, key):
    try:
        if isinstance(default, bool):
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return lowered in ("true", "1", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(int(v) for v in value.split(",") if v.strip())
        if default is None:
            if value.lower() in ("auto", "none", ""):
                return None
            return int(value) if value.lstrip("-").isdigit() else value
        return value
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def build_settings(pairs):
    """Apply ``pairs`` over the defaults; raises :class:`ConfigError` on unknown keys or bad values."""
    sections = {"data": {}, "net": {}, "train": {}, "eval": {}}
    defaults = {"data": DataSettings(), "net": NetworkConfig(), "train": TrainConfig(),
                "eval": EvalSettings()}
    for key, value in pairs.items():
        key = _ALIASES.get(key, key)
        section, _, name = key.partition(".")
        if section not in sections:
            raise ConfigError(f"unknown config key {key!r}")
        known = {f.name for f in dataclasses.fields(defaults[section])}
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        sections[section][name] = _convert(value, getattr(defaults[section], name), key)
    try:
        settings = RunSettings(
            data=dataclasses.replace(defaults["data"], **sections["data"]),
            net=dataclasses.replace(defaults["net"], **sections["net"]),
            train=dataclasses.replace(defaults["train"], **sections["train"]),
            eval=dataclasses.replace(defaults["eval"], **sections["eval"]),
        )
        settings.train.resolved(settings.net.num_heads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if settings.data.split not in SPLIT_NAMES:
        raise ConfigError(f"data.split must be one of {sorted(SPLIT_NAMES)}")
    return settings


def load_settings(path=None, overrides=()):
    """Read an optional config file, then apply ``key=value`` overrides on top."""
    pairs = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        pairs.update(parse_lines(path.read_text(encoding="utf-8"), str(path)))
    pairs.update(parse_lines("\n".join(overrides), "<overrides>"))
    return build_settings(pairs)


def format_settings(settings):
    lines = []
    for section in ("data", "net", "train", "eval"):
        for f in dataclasses.fields(getattr(settings, section)):
            value = getattr(getattr(settings, section), f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif value is None:
                value = "auto"
            lines.append(f"{section}.{f.name}={value}")
    return "\n".join(lines) + "\n"
