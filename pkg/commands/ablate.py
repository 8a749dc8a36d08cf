# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
ablate: DBP runs over subsample fractions or decorrelation scopes.
"""
import os

from commands.common import add_config_arguments, parse_float_list, parse_int_list, resolve_config
from core.decorr import Scope
from core.errors import ConfigError
from core.progress import banner
from services.experiments import ABLATION_FILE, ablate

NAME = 'ablate'
HELP = 'DBP over several subsample fractions or scopes'


def add_arguments(parser):
    add_config_arguments(parser)
    what = parser.add_mutually_exclusive_group(required=True)
    what.add_argument('--fractions', help='comma-separated decorr.subsample_fraction values')
    what.add_argument('--scopes', help=f"comma-separated scopes ({', '.join(Scope.ALL)})")
    parser.add_argument('--seeds', default='0,1,2,3,4', help='comma-separated seeds (default 0,1,2,3,4)')
    parser.add_argument('--workers', type=int, default=None, help='parallel runs (default DBP_RUN_WORKERS)')
    parser.add_argument('--out', help='output directory (default: <train.output_dir>/ablate)')
    parser.add_argument('--quiet', action='store_true', help='no per-epoch lines')


def build_variants(args):
    if args.fractions:
        return [{'decorr.subsample_fraction': f} for f in parse_float_list(args.fractions, '--fractions')]
    scopes = [s.strip() for s in args.scopes.split(',') if s.strip()]
    unknown = [s for s in scopes if s not in Scope.ALL]
    if unknown or not scopes:
        raise ConfigError(f"--scopes: unknown scope(s) {unknown}; use {', '.join(Scope.ALL)}")
    return [{'decorr.scope': s} for s in scopes]


def run(args):
    cfg = resolve_config(args, validate=False)
    variants = build_variants(args)
    seeds = parse_int_list(args.seeds, '--seeds')
    out = args.out or os.path.join(cfg.train.output_dir, 'ablate')
    banner(f"Ablating {len(variants)} DBP variants over {len(seeds)} seeds")
    rows = ablate(cfg, variants, seeds, workers=args.workers, output_dir=out, verbose=not args.quiet)

    for row in rows:
        if row.final_val_loss is None:
            print(f"✗ {row.label}: no run finished ({row.diverged} diverged, {row.failed} failed)")
            continue
        note = f"  ⚠ {row.diverged} diverged" if row.diverged else ''
        print(f"{row.label:40} final {row.final_val_loss.mean:.5f} ± {row.final_val_loss.std:.5f}  "
              f"best {row.best_val_loss.mean:.5f}  DBP {row.dbp_seconds_per_epoch:.3f}s/epoch{note}")
    print(f"✓ Results written to {os.path.join(out, ABLATION_FILE)}")
    return 0
