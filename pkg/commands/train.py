# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
train: one BP or DBP pre-training run.
"""
from commands.common import add_config_arguments, resolve_config
from core.progress import banner, report_epoch
from services.trainer import run_training

NAME = 'train'
HELP = 'pre-train one model (train.mode = BP or DBP)'


def add_arguments(parser):
    add_config_arguments(parser)
    parser.add_argument('--run-dir', help='run directory (default: train.output_dir)')


def run(args):
    cfg = resolve_config(args)
    banner(f"Training {cfg.train.mode} model, seed {cfg.train.seed}, {cfg.train.epochs} epochs")
    result = run_training(
        cfg, run_dir=args.run_dir,
        progress_cb=lambda record, model: report_epoch(record, cfg.train.mode, cfg.train.seed,
                                                       cfg.train.epochs))
    if result.best_epoch is not None:
        print(f"✓ Best validation loss {result.best_val_loss:.5f} at epoch {result.best_epoch}")
    print(f"✓ Run written to {result.run_dir}")
    return 0
