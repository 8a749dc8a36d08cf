# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Command-line verbs, one module each.
"""
from commands import ablate, compare, fuse, gen_data, show_config, sweep, train

COMMANDS = (train, compare, sweep, ablate, fuse, gen_data, show_config)


def register_commands(subparsers):
    """Attach every verb to the parser."""
    for command in COMMANDS:
        parser = subparsers.add_parser(command.NAME, help=command.HELP, description=command.HELP)
        command.add_arguments(parser)
        parser.set_defaults(handler=command.run)
