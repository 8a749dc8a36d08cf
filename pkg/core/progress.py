# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Status lines printed while runs train.
"""


def _fmt(value):
    return 'n/a' if value is None else f"{value:.5f}"


def report_epoch(record, mode='', seed=0, epochs=0):
    """Progress callback of a single run: one status line per finished epoch."""
    decorr = '' if record.mean_decorr_loss is None else f"  decorr {record.mean_decorr_loss:.5f}"
    print(f"[{mode} seed {seed}] epoch {record.epoch}/{epochs}  "
          f"train {_fmt(record.train_loss)}  val {_fmt(record.val_loss)}{decorr}  "
          f"lr_W {record.lr_W:.3g}  {record.wall_seconds:.1f}s")


def banner(title):
    print("=" * 50)
    print(title)
    print("=" * 50)
