# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
fuse: rewrite a checkpoint with every R folded into its weight.
"""
from core.train_config import config_from_dict
from services.checkpoint import load_checkpoint, save_checkpoint

NAME = 'fuse'
HELP = 'fold the decorrelation matrices of a checkpoint into its weights'


def add_arguments(parser):
    parser.add_argument('checkpoint', help='checkpoint to read')
    parser.add_argument('output', help='fused checkpoint to write')


def run(args):
    ckpt = load_checkpoint(args.checkpoint)
    sites = len(ckpt.model.decorrelation_matrices())
    if ckpt.fused:
        print("⚠ Checkpoint is already fused; writing it unchanged")
    # Optimizer moments belong to the unfused parameters, so they are not carried over
    run_config = config_from_dict(ckpt.config) if ckpt.config is not None else None
    save_checkpoint(ckpt.model, args.output, fuse=True, config=run_config, epoch=ckpt.epoch,
                    extra=ckpt.metadata)
    if run_config is not None:
        print(f"Model of a {run_config.train.mode} run, seed {run_config.train.seed}")
    print(f"✓ Fused {sites} decorrelation sites into {args.output}")
    return 0
