#!/usr/bin/env python3
# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
DBP-MAE - Main Application

Masked-autoencoder pre-training with and without decorrelated
backpropagation, and the experiments that compare the two.

    config.py     process settings read from the environment
    commands/     the command-line verbs
    core/         decorrelation, layers, the MAE model, optimizers, run config
    services/     datasets, checkpoints, metrics, training runs, experiments
    utils/        small helpers (atomic file writes)
"""
import argparse
import sys

from commands import register_commands
from core.errors import (ConfigError, DatasetFormatError, DbpError, NonFiniteGradientError,
                         NumericalDivergenceError, RunFailedError)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog='dbp-mae', description='MAE pre-training with decorrelated backpropagation')
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True
    register_commands(subparsers)
    return parser


def exit_code_for(error):
    """0 success, 2 unusable configuration, 3 numerical divergence, 1 anything else."""
    if isinstance(error, (NumericalDivergenceError, NonFiniteGradientError)):
        return EXIT_DIVERGED
    if isinstance(error, RunFailedError) and error.diverged:
        return EXIT_DIVERGED
    if isinstance(error, (ConfigError, DatasetFormatError)):
        return EXIT_CONFIG
    return EXIT_FAILURE


def main(argv=None):
    """Main application entry point"""
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except DbpError as e:
        print(f"✗ {e}", file=sys.stderr)
        return exit_code_for(e)
    except OSError as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
