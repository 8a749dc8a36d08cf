# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
How the two kinds of parameters move.

W, b and the norm parameters are trained by AdamW on the task loss, with a
cosine learning-rate schedule. The decorrelation matrices are trained by their
own rule (core/decorr.py) with a constant rate and no momentum. Neither
optimizer ever touches the other's parameters.
"""
import concurrent.futures
import math
from dataclasses import dataclass, field

import numpy as np

from core.decorr import (decorrelation_loss, off_diagonal_covariance,
                         subsample_rows, update_decorrelation)
from core.errors import ConfigError, ContractViolationError, NonFiniteGradientError, StateError


@dataclass
class ScheduleConfig:
    """Linear warmup to base_lr, then cosine decay to min_lr. Epochs may be fractional."""
    base_lr: float = 1.5e-3
    warmup_epochs: int = 5
    total_epochs: int = 60
    min_lr: float = 0.0

    def validate(self):
        if self.base_lr < 0 or self.min_lr < 0:
            raise ConfigError("learning rates must not be negative")
        if not 0 <= self.warmup_epochs <= self.total_epochs:
            raise ConfigError(f"warmup_epochs ({self.warmup_epochs}) must be within "
                              f"0..total_epochs ({self.total_epochs})")


def lr_at(schedule, epoch):
    """The learning rate at a (possibly fractional) epoch."""
    warmup = schedule.warmup_epochs
    if warmup > 0 and epoch < warmup:
        return schedule.base_lr * epoch / warmup
    decay_epochs = schedule.total_epochs - warmup
    if decay_epochs <= 0:
        return schedule.base_lr
    progress = min(1.0, (epoch - warmup) / decay_epochs)
    if progress <= 0.0:
        return schedule.base_lr
    if progress >= 1.0:
        return schedule.min_lr
    return schedule.min_lr + 0.5 * (schedule.base_lr - schedule.min_lr) * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamWState:
    """
    Moments per parameter name, created lazily on the first step.

    Names in ``no_decay`` are updated without weight decay.
    """
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.05
    eps: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    no_decay: frozenset = frozenset()


def adamw_step(state, params, grads, lr):
    """
    One AdamW update of ``params`` (name -> array), in place.

    Decay is decoupled: p <- p * (1 - lr * wd) before the adaptive step.
    Returns ``params``.
    """
    for name, grad in grads.items():
        if grad is None:
            raise StateError(f"no gradient for parameter '{name}'")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(name)

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t

    for name, param in params.items():
        grad = grads[name]
        if np.shape(grad) != np.shape(param):
            raise ContractViolationError(f"gradient of '{name}' has shape {np.shape(grad)}, "
                                         f"parameter has {np.shape(param)}")
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(param, dtype=np.float64)
            state.second_moment[name] = np.zeros_like(param, dtype=np.float64)
        v = state.second_moment[name]

        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * np.square(grad, dtype=np.float64)

        updated = np.asarray(param, dtype=np.float64)
        if state.weight_decay and name not in state.no_decay:
            updated = updated * (1.0 - lr * state.weight_decay)
        updated = updated - lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param[...] = updated
    return params


def dbp_active(epoch, stop_epoch):
    """Whether R is still being trained in this (0-based) epoch."""
    return stop_epoch is None or epoch < stop_epoch


def _update_site(layer, eta, fraction, rng, epoch):
    if layer.cached_input is None:
        raise StateError(f"no cached input at site {layer.site_id}; run a forward pass first")
    rows = subsample_rows(layer.cached_input, fraction, rng)
    estimate = off_diagonal_covariance(rows)
    update_decorrelation(layer.decorr, estimate, eta, epoch)
    # A one-dimensional input has no off-diagonal entries to measure
    return decorrelation_loss(estimate) if estimate.dim >= 2 else None


def dbp_step(sites, eta, fraction, rng, epoch=0, stop_epoch=None, executor=None):
    """
    One decorrelation update at every site that carries an R.

    Each site subsamples its own cached input with a generator spawned from
    ``rng`` in site order, so the result is the same whether the sites run one
    after another or on ``executor``. Returns site_id -> decorrelation loss of
    the rows used, or an empty dict when the update is switched off. Sites with
    a one-dimensional input are updated but have no loss entry.
    """
    if not dbp_active(epoch, stop_epoch):
        return {}
    sites = [layer for layer in sites if layer.decorr is not None]
    if not sites:
        return {}
    site_rngs = rng.spawn(len(sites))

    if executor is None:
        losses = [_update_site(layer, eta, fraction, site_rng, epoch)
                  for layer, site_rng in zip(sites, site_rngs)]
    else:
        futures = [executor.submit(_update_site, layer, eta, fraction, site_rng, epoch)
                   for layer, site_rng in zip(sites, site_rngs)]
        concurrent.futures.wait(futures)
        # result() re-raises the first failure, divergence included
        losses = [future.result() for future in futures]
    return {layer.site_id: loss for layer, loss in zip(sites, losses) if loss is not None}
