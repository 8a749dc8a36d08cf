# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Everything this project raises.

One root, ``DbpError``, so a command can tell its own failures apart from a
bug, and a handful of leaves that carry what a caller needs to report them:
the site a shape mismatch happened at, the epoch training diverged in.
"""


class DbpError(Exception):
    """Root of every error raised on purpose."""


class ContractViolationError(DbpError):
    """Inputs do not have the shape an operation was built for."""

    def __init__(self, message, site_id=None):
        if site_id is not None:
            message = f"{message} (site {site_id})"
        super().__init__(message)
        self.site_id = site_id


class EmptyBatchError(DbpError):
    """A statistic was asked of zero rows."""


class UndefinedMetricError(DbpError):
    """A metric that has no value for these inputs, e.g. correlations of d < 2."""


class StateError(DbpError):
    """An operation called out of order, such as backward before forward."""


class NumericalDivergenceError(DbpError):
    """A decorrelation matrix stopped being finite or grew past the limit."""

    def __init__(self, site_id, epoch=None, detail=''):
        where = f"site {site_id}" + (f", epoch {epoch}" if epoch is not None else '')
        super().__init__(f"Decorrelation diverged at {where}{': ' + detail if detail else ''}")
        self.site_id = site_id
        self.epoch = epoch


class NonFiniteGradientError(DbpError):
    """A gradient handed to the optimizer holds NaN or infinity."""

    def __init__(self, name):
        super().__init__(f"Non-finite gradient for parameter '{name}'")
        self.name = name


class ConfigError(DbpError):
    """A configuration value or key that cannot be used."""


class DatasetFormatError(DbpError):
    """A dataset file that is not a valid DBPTNSR1 file."""


class BadMagicError(DatasetFormatError):
    pass


class DtypeMismatchError(DatasetFormatError):
    pass


class LengthMismatchError(DatasetFormatError):
    pass


class CheckpointError(DbpError):
    """A checkpoint that cannot be read back into a model."""


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointMismatchError(CheckpointError):
    pass


class RunFailedError(DbpError):
    """One run of a multi-run experiment failed; says which one."""

    def __init__(self, mode, seed, cause, diverged=False):
        super().__init__(f"{mode} run with seed {seed} failed: {cause}")
        self.mode = mode
        self.seed = seed
        self.cause = cause
        self.diverged = diverged
