# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""Shared fixtures. The application is a flat layout, so its root goes on sys.path."""
import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from core.mae import MaeConfig  # noqa: E402
from core.train_config import TrainConfig, derive  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_mae():
    """A model small enough for finite differences: 8x8 images, 4 patches."""
    return MaeConfig(image_size=8, patch_size=4, channels=1, embed_dim=8, depth=1, heads=2,
                     decoder_embed_dim=8, decoder_depth=1, decoder_heads=2, mlp_ratio=2.0,
                     mask_ratio=0.5, dtype='float64')


@pytest.fixture
def tiny_config(tmp_path):
    """A run that trains in well under a second."""
    return derive(TrainConfig(), {
        'mae.image_size': 8, 'mae.patch_size': 4, 'mae.channels': 1,
        'mae.embed_dim': 8, 'mae.depth': 1, 'mae.heads': 2,
        'mae.decoder_embed_dim': 8, 'mae.decoder_depth': 1, 'mae.decoder_heads': 2,
        'mae.mlp_ratio': 2.0, 'mae.mask_ratio': 0.5,
        'data.synthetic_count': 20, 'data.correlation_length': 1.0,
        'optimizer.warmup_epochs': 1,
        'decorr.eta': 1e-3, 'decorr.subsample_fraction': 0.5,
        'train.epochs': 3, 'train.batch_size': 6, 'train.output_dir': str(tmp_path / 'runs'),
    })


class CountingClock:
    """A clock that advances by one per call, so timings are reproducible."""

    def __init__(self):
        self.now = 0.0

    def __call__(self):
        self.now += 1.0
        return self.now


@pytest.fixture
def counting_clock():
    return CountingClock()
