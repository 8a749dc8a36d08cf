# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Decorrelation matrices and the rule that trains them.

A decorrelated site keeps a square matrix R in front of its weight, so the
weight sees z = Rx instead of x. R starts as the identity and is nudged after
every mini-batch by R <- R - eta * C * R, where C holds the off-diagonal part
of the uncentered covariance of z. Once the inputs are decorrelated C is zero
and R stops moving.

Rows are samples throughout: a batch is N x d and the transform is x @ R.T.
Sequence inputs (batch x tokens x d) are treated as batch*tokens samples.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.errors import (ConfigError, ContractViolationError, EmptyBatchError,
                         NumericalDivergenceError, UndefinedMetricError)

# Largest magnitude an entry of R may reach before the update is considered
# diverged.
DIVERGENCE_LIMIT = 1e6


class DecorrelationMatrix:
    """The matrix R of one site. Starts as the identity."""

    def __init__(self, dim, site_id, values=None, dtype=np.float64):
        if dim < 1:
            raise ContractViolationError(f"dimension must be positive, got {dim}", site_id)
        if values is None:
            values = np.eye(dim, dtype=dtype)
        else:
            values = np.array(values, dtype=dtype)
            if values.shape != (dim, dim):
                raise ContractViolationError(
                    f"values must be {dim}x{dim}, got {values.shape}", site_id)
        self.dim = dim
        self.site_id = site_id
        self.values = values

    def copy(self):
        return DecorrelationMatrix(self.dim, self.site_id, self.values.copy(), self.values.dtype)

    def is_identity(self):
        return np.array_equal(self.values, np.eye(self.dim, dtype=self.values.dtype))

    def __repr__(self):
        return f"DecorrelationMatrix(site_id={self.site_id!r}, dim={self.dim})"


@dataclass
class CorrelationEstimate:
    """Off-diagonal uncentered covariance C, and how many rows it came from."""
    off_diag: np.ndarray
    sample_count: int

    @property
    def dim(self):
        return self.off_diag.shape[0]


def _as_rows(batch, dim=None, site_id=None):
    """Flatten any leading axes into rows: (..., d) -> (N, d)."""
    batch = np.asarray(batch)
    if batch.ndim < 2:
        raise ContractViolationError(f"expected a batch of rows, got shape {batch.shape}", site_id)
    if dim is not None and batch.shape[-1] != dim:
        raise ContractViolationError(
            f"input has {batch.shape[-1]} columns, expected {dim}", site_id)
    return batch.reshape(-1, batch.shape[-1])


def decorrelate(R, x_batch):
    """z = R x for every row of ``x_batch``. Leading axes are kept."""
    x_batch = np.asarray(x_batch)
    if x_batch.ndim < 1 or x_batch.shape[-1] != R.dim:
        raise ContractViolationError(
            f"input has {x_batch.shape[-1] if x_batch.ndim else 0} columns, "
            f"expected {R.dim}", R.site_id)
    return x_batch @ R.values.T


def off_diagonal_covariance(z_batch):
    """
    C = (1/N) Z^T Z with the diagonal zeroed.

    Takes the decorrelated inputs z, the quantity the update drives toward
    zero correlation.
    """
    z = _as_rows(z_batch)
    n = z.shape[0]
    if n == 0:
        raise EmptyBatchError("cannot estimate correlations of an empty batch")
    d = z.T @ z / n
    np.fill_diagonal(d, 0.0)
    return CorrelationEstimate(off_diag=d, sample_count=n)


def subsample_size(n, fraction):
    """max(1, ceil(fraction * n)); rounded first so 0.1 * 100 is 10, not 11."""
    return max(1, math.ceil(round(fraction * n, 9)))


def subsample_rows(z_batch, fraction, rng):
    """
    A uniform sample of ``fraction`` of the rows, without replacement.

    The chosen rows keep their original order, so fraction 1.0 returns the
    batch as it is and the estimate computed from it is the full-batch one.
    """
    if not 0.0 < fraction <= 1.0:
        raise ContractViolationError(f"subsample fraction must be in (0, 1], got {fraction}")
    z = _as_rows(z_batch)
    n = z.shape[0]
    m = subsample_size(n, fraction)
    if m >= n:
        return z
    rows = np.sort(rng.choice(n, size=m, replace=False))
    return z[rows]


def update_decorrelation(R, C, eta, epoch=None):
    """
    R <- R - eta * C * R, in place. Returns R.

    Raises NumericalDivergenceError, naming the site and epoch, when the result
    is not finite or an entry leaves [-DIVERGENCE_LIMIT, DIVERGENCE_LIMIT]; R is
    left at its previous value in that case.
    """
    if C.dim != R.dim:
        raise ContractViolationError(
            f"correlation estimate is {C.dim}x{C.dim}, matrix is {R.dim}x{R.dim}", R.site_id)
    if not eta > 0:
        raise ContractViolationError(f"decorrelation learning rate must be positive, got {eta}",
                                     R.site_id)

    updated = R.values - eta * (C.off_diag @ R.values)
    if not np.all(np.isfinite(updated)):
        raise NumericalDivergenceError(R.site_id, epoch, 'non-finite entries')
    largest = float(np.max(np.abs(updated)))
    if largest > DIVERGENCE_LIMIT:
        raise NumericalDivergenceError(R.site_id, epoch, f'entry magnitude {largest:.3g}')

    R.values[...] = updated
    return R


def decorrelation_loss(C):
    """Mean of the squared off-diagonal entries: sum_{i!=j} C_ij^2 / (d(d-1))."""
    d = C.dim
    if d < 2:
        raise UndefinedMetricError(f"decorrelation loss needs at least 2 dimensions, got {d}")
    off = C.off_diag
    total = float(np.sum(off * off) - np.sum(np.diag(off) ** 2))
    return total / (d * (d - 1))


def decorrelation_losses(sites):
    """
    site_id -> decorrelation loss of each site's cached input, on all rows.

    Measurement only: nothing is updated. Works for sites with or without R,
    since the cached input is whatever the weight saw. Sites whose input has
    fewer than 2 dimensions are left out.
    """
    losses = {}
    for site in sites:
        if site.cached_input is None or site.cached_input.shape[-1] < 2:
            continue
        losses[site.site_id] = decorrelation_loss(off_diagonal_covariance(site.cached_input))
    return losses


def fuse_weights(W, R):
    """W~ = W R, so that f(W~ x) = f(W R x) and R can be dropped."""
    W = np.asarray(W)
    if W.ndim != 2 or W.shape[1] != R.dim:
        raise ContractViolationError(
            f"weight has {W.shape[-1] if W.ndim else 0} columns, expected {R.dim}", R.site_id)
    if R.is_identity():
        return W.copy()
    return (W @ R.values).astype(W.dtype, copy=False)


class Scope:
    """Which part of the model carries decorrelation sites."""
    ENCODER_ONLY = 'encoder_only'
    FULL_MODEL = 'full_model'
    DECODER_ONLY = 'decoder_only'

    ALL = (ENCODER_ONLY, FULL_MODEL, DECODER_ONLY)


@dataclass
class DecorrConfig:
    """
    Settings of the decorrelation update.

    ``stop_epoch`` freezes every R from that epoch on; None keeps the update
    running for the whole run.
    """
    eta: float = 5e-4
    subsample_fraction: float = 0.10
    scope: str = Scope.ENCODER_ONLY
    stop_epoch: Optional[int] = None
    per_linear_mode: bool = False

    def validate(self):
        if not self.eta >= 0:
            raise ConfigError(f"decorr.eta must not be negative, got {self.eta}")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ConfigError(
                f"decorr.subsample_fraction must be in (0, 1], got {self.subsample_fraction}")
        if self.scope not in Scope.ALL:
            raise ConfigError(f"decorr.scope must be one of {', '.join(Scope.ALL)}, got '{self.scope}'")
        if self.stop_epoch is not None and self.stop_epoch < 0:
            raise ConfigError(f"decorr.stop_epoch must not be negative, got {self.stop_epoch}")
