# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Configuration module for the DBP pre-training harness.

Process-wide settings come from the environment (how many runs to launch at
once, where results go). Everything that defines an experiment lives in its
config file instead (core/train_config.py), so a run can be reproduced from
its output directory alone.
"""
import os


def _env_int(name, default):
    """
    Read an integer environment variable, falling back to ``default`` on a
    missing, empty or non-numeric value instead of refusing to start.
    """
    raw = os.environ.get(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return int(raw.strip())
    except (TypeError, ValueError):
        print(f"Warning: {name}='{raw}' is not a valid integer; using {default}")
        return default


# Where run directories are created when a config does not name one.
DEFAULT_OUTPUT_DIR = os.environ.get('DBP_OUTPUT_DIR', '').strip() or os.path.join('.', 'runs')

# Training runs launched at once by compare, sweep and ablate. Each run is a
# separate process with its own model, so they share nothing but the CPU.
# Default 1 runs them one after another, which is also the only setting
# where per-run wall-clock numbers are free of interference.
RUN_WORKERS = max(1, _env_int('DBP_RUN_WORKERS', 1))

# Threads for the per-site decorrelation update. Sites are independent, so
# their updates may overlap; numpy releases the GIL inside the matrix products.
SITE_WORKERS = max(1, _env_int('DBP_SITE_WORKERS', 1))

# How often (in epochs) the last-epoch checkpoint is rewritten. The best
# checkpoint is always written when validation improves, and the final epoch
# always writes the last one.
CHECKPOINT_EVERY = max(1, _env_int('DBP_CHECKPOINT_EVERY_EPOCH', 1))

# File names inside a run directory
METRICS_FILE = 'metrics.csv'
SUMMARY_FILE = 'summary.json'
BEST_CHECKPOINT = 'checkpoint_best.ckpt'
LAST_CHECKPOINT = 'checkpoint_last.ckpt'
CONFIG_SNAPSHOT = 'config.txt'

# Reference values of the full-scale recipe (ViT-Base MAE on ImageNet-1K).
# Not used by any default: the desk-scale defaults in core/train_config.py and
# core/mae.py are what a run starts from. Kept so a full-scale config can be
# written down from one place.
FULL_SCALE = {
    'mae.image_size': 224,
    'mae.patch_size': 16,
    'mae.embed_dim': 768,
    'mae.depth': 12,
    'mae.heads': 12,
    'mae.decoder_depth': 2,
    'mae.mask_ratio': 0.75,
    'optimizer.base_lr': 5.0e-4,
    'optimizer.dbp_base_lr': 1.0e-3,
    'optimizer.warmup_epochs': 40,
    'optimizer.beta1': 0.9,
    'optimizer.beta2': 0.95,
    'optimizer.weight_decay': 0.05,
    'decorr.eta': 5.0e-4,
    'decorr.subsample_fraction': 0.10,
    'train.epochs': 1000,
    'train.batch_size': 4096,
}

# Epoch budget of one learning-rate sweep cell, after the full-scale practice
# of comparing grid cells early in training.
SWEEP_EPOCHS = _env_int('DBP_SWEEP_EPOCHS', 20)
