# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
The configuration of one experiment.

A run is described by a flat text file of dotted keys, one per line:

    # desk-scale DBP run
    train.mode = DBP
    train.epochs = 60
    decorr.eta = 1e-3
    decorr.scope = encoder_only

Every key maps onto a field of the dataclass tree below; a key that maps onto
nothing is an error, not a silently ignored typo, since a run that quietly
used a default is a run that cannot be reproduced. The same keys double as
command-line flags (``--decorr.eta 1e-3``).
"""
import copy
import dataclasses
import typing
from dataclasses import dataclass, field
from typing import Optional

import config
from core.decorr import DecorrConfig
from core.errors import ConfigError
from core.mae import MaeConfig
from core.optim import ScheduleConfig
from services.datasets import AugmentConfig, SyntheticSpec

MODES = ('BP', 'DBP')


@dataclass
class OptimizerConfig:
    """AdamW for W and b. ``dbp_base_lr``, when set, replaces base_lr in DBP runs."""
    base_lr: float = 1e-3
    dbp_base_lr: Optional[float] = None
    warmup_epochs: int = 5
    min_lr: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.05
    eps: float = 1e-8


@dataclass
class DataConfig:
    """A DBPTNSR1 file when ``path`` is set, synthetic correlated images otherwise."""
    path: Optional[str] = None
    synthetic_count: int = 4096
    correlation_length: float = 2.0
    synthetic_seed: int = 0
    val_fraction: float = 0.10
    augment: bool = True
    random_crop: bool = True
    crop_scale_min: float = 0.2
    crop_scale_max: float = 1.0
    flip_prob: float = 0.5
    interpolation: str = 'bilinear'


@dataclass
class RunConfig:
    mode: str = 'DBP'
    epochs: int = 60
    batch_size: int = 128
    seed: int = 0
    output_dir: str = field(default_factory=lambda: config.DEFAULT_OUTPUT_DIR)


@dataclass
class TrainConfig:
    mae: MaeConfig = field(default_factory=MaeConfig)
    decorr: DecorrConfig = field(default_factory=DecorrConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: RunConfig = field(default_factory=RunConfig)

    @property
    def is_dbp(self):
        return self.train.mode == 'DBP'

    def w_lr(self):
        if self.is_dbp and self.optimizer.dbp_base_lr is not None:
            return self.optimizer.dbp_base_lr
        return self.optimizer.base_lr

    def schedule(self):
        """The W schedule of this run; warmup is capped at the run length."""
        epochs = self.train.epochs
        return ScheduleConfig(base_lr=self.w_lr(),
                              warmup_epochs=min(self.optimizer.warmup_epochs, epochs),
                              total_epochs=epochs,
                              min_lr=self.optimizer.min_lr)

    def synthetic_spec(self):
        return SyntheticSpec(count=self.data.synthetic_count, channels=self.mae.channels,
                             size=self.mae.image_size,
                             correlation_length=self.data.correlation_length,
                             seed=self.data.synthetic_seed)

    def augment_config(self):
        return AugmentConfig(random_crop=self.data.random_crop,
                             crop_scale=(self.data.crop_scale_min, self.data.crop_scale_max),
                             flip_prob=self.data.flip_prob,
                             interpolation=self.data.interpolation)

    def validate(self):
        self.mae.validate()
        self.decorr.validate()
        self.schedule().validate()
        self.augment_config().validate()
        if self.train.mode not in MODES:
            raise ConfigError(f"train.mode must be BP or DBP, got '{self.train.mode}'")
        if self.is_dbp and not self.decorr.eta > 0:
            raise ConfigError("train.mode = DBP needs decorr.eta > 0 (use BP for a zero rate)")
        if self.train.epochs < 0:
            raise ConfigError(f"train.epochs must not be negative, got {self.train.epochs}")
        if self.train.batch_size < 1:
            raise ConfigError(f"train.batch_size must be positive, got {self.train.batch_size}")
        if not 0.0 < self.data.val_fraction < 1.0:
            raise ConfigError(f"data.val_fraction must be in (0, 1), got {self.data.val_fraction}")
        if self.data.path is None and self.data.synthetic_count < 2:
            raise ConfigError("data.synthetic_count must be at least 2 to leave a validation split")
        return self


# --- Dotted keys --------------------------------------------------------------

def _fields(section):
    return {f.name: f for f in dataclasses.fields(section)}


def config_keys(cfg=None):
    """Every dotted key with its declared type, in file order."""
    cfg = cfg or TrainConfig()
    keys = []
    for section in dataclasses.fields(cfg):
        for f in dataclasses.fields(getattr(cfg, section.name)):
            keys.append((f"{section.name}.{f.name}", f.type))
    return keys


def _split_key(key):
    section, _, name = key.partition('.')
    if not name:
        raise ConfigError(f"'{key}' is not a dotted section.key")
    return section, name


def _coerce(key, raw, declared):
    """Turn the text of a value into the field's type."""
    raw = raw.strip()
    optional = typing.get_origin(declared) is typing.Union and type(None) in typing.get_args(declared)
    if optional:
        if raw.lower() in ('', 'none', 'null', 'never'):
            return None
        declared = next(arg for arg in typing.get_args(declared) if arg is not type(None))
    try:
        if declared is bool:
            lowered = raw.lower()
            if lowered in ('true', 'yes', 'on', '1'):
                return True
            if lowered in ('false', 'no', 'off', '0'):
                return False
            raise ValueError(raw)
        if declared is int:
            return int(raw)
        if declared is float:
            return float(raw)
        if declared is str:
            return raw
    except ValueError:
        raise ConfigError(f"{key}: '{raw}' is not a valid {declared.__name__}") from None
    raise ConfigError(f"{key}: unsupported field type {declared}")


def _resolve(cfg, key):
    """(section object, field name) for a dotted key, or ConfigError."""
    section_name, name = _split_key(key)
    if section_name not in _fields(cfg):
        raise ConfigError(f"unknown config section '{section_name}' in key '{key}'")
    section = getattr(cfg, section_name)
    if name not in _fields(section):
        raise ConfigError(f"unknown config key '{key}'")
    return section, name


def set_value(cfg, key, raw):
    """Set one dotted key from its text form. Unknown keys raise ConfigError."""
    section, name = _resolve(cfg, key)
    setattr(section, name, _coerce(key, str(raw), _fields(section)[name].type))


def parse_config_text(text, base=None):
    """Apply a config file's lines on top of ``base`` (defaults when omitted)."""
    cfg = copy.deepcopy(base) if base is not None else TrainConfig()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split('#', 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition('=')
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{line.strip()}'")
        key = key.strip()
        if key in seen:
            raise ConfigError(f"line {lineno}: '{key}' is set twice")
        seen.add(key)
        set_value(cfg, key, value)
    return cfg


def load_config(path, overrides=None):
    """Read a config file and apply ``overrides`` (dotted key -> text) on top."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            cfg = parse_config_text(f.read())
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for key, raw in (overrides or {}).items():
        set_value(cfg, key, raw)
    return cfg


def _format_value(value):
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg):
    """The configuration as a config file that parses back to the same values."""
    lines = []
    for section in dataclasses.fields(cfg):
        for f in dataclasses.fields(getattr(cfg, section.name)):
            value = getattr(getattr(cfg, section.name), f.name)
            lines.append(f"{section.name}.{f.name} = {_format_value(value)}")
    return '\n'.join(lines) + '\n'


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def config_from_dict(data):
    """Rebuild a TrainConfig from config_to_dict output (e.g. a checkpoint snapshot)."""
    cfg = TrainConfig()
    for section_name, values in data.items():
        for name, value in values.items():
            section, name = _resolve(cfg, f"{section_name}.{name}")
            setattr(section, name, value)
    return cfg


def derive(cfg, changes):
    """A copy of ``cfg`` with {dotted key: typed value} applied."""
    new = copy.deepcopy(cfg)
    for key, value in changes.items():
        section, name = _resolve(new, key)
        setattr(section, name, value)
    return new
