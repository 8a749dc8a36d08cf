# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
sweep: grid search over the W and R learning rates.
"""
import os

import config
from commands.common import add_config_arguments, parse_float_list, resolve_config
from core.progress import banner
from services.experiments import SWEEP_FILE, best_cell, sweep

NAME = 'sweep'
HELP = 'grid over lr_W x lr_R; lr_R = 0 cells run as BP'


def add_arguments(parser):
    add_config_arguments(parser)
    parser.add_argument('--lr-w', required=True, help='comma-separated W learning rates')
    parser.add_argument('--lr-r', required=True, help='comma-separated R learning rates (0 = BP)')
    parser.add_argument('--sweep-epochs', type=int, default=config.SWEEP_EPOCHS,
                        help=f'epochs per cell (default {config.SWEEP_EPOCHS}, DBP_SWEEP_EPOCHS)')
    parser.add_argument('--workers', type=int, default=None, help='parallel runs (default DBP_RUN_WORKERS)')
    parser.add_argument('--out', help='output directory (default: <train.output_dir>/sweep)')
    parser.add_argument('--quiet', action='store_true', help='no per-epoch lines')


def run(args):
    cfg = resolve_config(args, validate=False)
    lr_w = parse_float_list(args.lr_w, '--lr-w')
    lr_r = parse_float_list(args.lr_r, '--lr-r')
    out = args.out or os.path.join(cfg.train.output_dir, 'sweep')
    banner(f"Sweeping {len(lr_w)} x {len(lr_r)} learning rates, {args.sweep_epochs} epochs each")
    cells = sweep(cfg, lr_w, lr_r, epochs=args.sweep_epochs, workers=args.workers,
                  output_dir=out, verbose=not args.quiet)

    print(f"{'lr_W':>10}{'lr_R':>10}{'train':>12}{'val':>12}{'best':>12}")
    for cell in cells:
        if cell.error:
            print(f"{cell.lr_W:>10.3g}{cell.lr_R:>10.3g}  ✗ {cell.error}")
        else:
            print(f"{cell.lr_W:>10.3g}{cell.lr_R:>10.3g}{cell.final_train_loss:>12.5f}"
                  f"{cell.final_val_loss:>12.5f}{cell.best_val_loss:>12.5f}")
    winner = best_cell(cells)
    if winner is not None:
        print(f"✓ Best cell: lr_W={winner.lr_W:g} lr_R={winner.lr_R:g} "
              f"(val {winner.best_val_loss:.5f} at epoch {winner.best_epoch})")
    failed = sum(1 for cell in cells if cell.error)
    if failed:
        print(f"⚠ {failed} of {len(cells)} cells failed")
    print(f"✓ Grid written to {os.path.join(out, SWEEP_FILE)}")
    return 0
