# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
What the commands share: the config flags and turning them into a TrainConfig.

Every dotted config key is also a flag, so ``--decorr.eta 1e-3`` overrides
``decorr.eta`` from the file given with ``--config`` (or from the defaults).
"""
from core.errors import ConfigError
from core.train_config import TrainConfig, config_keys, load_config, set_value

_FLAG_PREFIX = 'cfg:'


def _type_name(declared):
    return getattr(declared, '__name__', None) or str(declared).replace('typing.', '')


def add_config_arguments(parser):
    """``--config FILE`` plus one flag per dotted config key."""
    parser.add_argument('--config', metavar='FILE', help='experiment config file (section.key = value)')
    group = parser.add_argument_group('config keys', 'override a single key of the config file')
    for key, declared in config_keys():
        group.add_argument(f'--{key}', dest=_FLAG_PREFIX + key, metavar=_type_name(declared).upper(),
                           default=None)


def config_overrides(args):
    """{dotted key: text} of the config flags actually given."""
    return {dest[len(_FLAG_PREFIX):]: value for dest, value in vars(args).items()
            if dest.startswith(_FLAG_PREFIX) and value is not None}


def resolve_config(args, validate=True):
    """
    The config file (or the defaults) with the command-line flags on top.

    Multi-run commands pass ``validate=False``: they set train.mode per run and
    validate each run config themselves.
    """
    overrides = config_overrides(args)
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        cfg = TrainConfig()
        for key, raw in overrides.items():
            set_value(cfg, key, raw)
    return cfg.validate() if validate else cfg


def parse_float_list(text, name):
    """'1e-3,5e-4' -> [0.001, 0.0005]."""
    try:
        values = [float(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise ConfigError(f"{name}: '{text}' is not a comma-separated list of numbers") from None
    if not values:
        raise ConfigError(f"{name}: no values given")
    return values


def parse_int_list(text, name):
    try:
        values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise ConfigError(f"{name}: '{text}' is not a comma-separated list of integers") from None
    if not values:
        raise ConfigError(f"{name}: no values given")
    return values
