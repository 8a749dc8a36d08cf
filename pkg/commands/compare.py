# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
compare: BP against DBP over several seeds.
"""
import os

from commands.common import add_config_arguments, parse_int_list, resolve_config
from core.progress import banner
from services.experiments import COMPARISON_FILE, run_paired_comparison

NAME = 'compare'
HELP = 'paired BP vs DBP runs over seeds, with summary statistics'


def add_arguments(parser):
    add_config_arguments(parser)
    parser.add_argument('--seeds', default='0,1,2,3,4', help='comma-separated seeds (default 0,1,2,3,4)')
    parser.add_argument('--workers', type=int, default=None, help='parallel runs (default DBP_RUN_WORKERS)')
    parser.add_argument('--out', help='output directory (default: <train.output_dir>/compare)')
    parser.add_argument('--quiet', action='store_true', help='no per-epoch lines')


def _fmt_band(b, digits=5):
    return 'n/a' if b is None else f"{b.mean:.{digits}f} ± {b.std:.{digits}f} (se {b.stderr:.{digits}f})"


def print_summary(summary):
    print(f"{'':28}{'BP':>36}{'DBP':>36}")
    print(f"{'best val loss':28}{_fmt_band(summary.best['BP']):>36}{_fmt_band(summary.best['DBP']):>36}")
    print(f"{'final val loss':28}{_fmt_band(summary.final['BP']):>36}{_fmt_band(summary.final['DBP']):>36}")
    print(f"{'epochs to BP best':28}{_fmt_band(summary.epochs_to_target['BP'], 1):>36}"
          f"{_fmt_band(summary.epochs_to_target['DBP'], 1):>36}")
    print(f"{'seconds to BP best':28}{_fmt_band(summary.seconds_to_target['BP'], 2):>36}"
          f"{_fmt_band(summary.seconds_to_target['DBP'], 2):>36}")
    print(f"DBP val loss at BP's training time: {_fmt_band(summary.equal_time_loss)}")
    if summary.epoch_overhead_percent is not None:
        print(f"DBP time per epoch: {summary.epoch_overhead_percent:+.1f}% vs BP")
    if summary.wall_clock_reduction_percent is not None:
        print(f"Wall-clock reduction to BP's best: {summary.wall_clock_reduction_percent:.1f}%")
    print(f"Welch t-test on final val loss: p = {summary.p_value:.4g}")
    print(f"DBP reached BP's best in fewer epochs for {summary.dbp_faster_seeds}/{len(summary.seeds)} seeds")


def run(args):
    cfg = resolve_config(args, validate=False)
    seeds = parse_int_list(args.seeds, '--seeds')
    out = args.out or os.path.join(cfg.train.output_dir, 'compare')
    banner(f"Comparing BP and DBP over {len(seeds)} seeds")
    summary = run_paired_comparison(cfg, seeds, workers=args.workers, output_dir=out,
                                    verbose=not args.quiet)
    print_summary(summary)
    print(f"✓ Summary written to {os.path.join(out, COMPARISON_FILE)}")
    return 0
