# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
show-config: print the resolved configuration as a config file.
"""
from commands.common import add_config_arguments, resolve_config
from core.train_config import format_config

NAME = 'show-config'
HELP = 'print the configuration a run would use'


def add_arguments(parser):
    add_config_arguments(parser)


def run(args):
    print(format_config(resolve_config(args)), end='')
    return 0
