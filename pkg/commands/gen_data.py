# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
gen-data: write a synthetic correlated-image dataset.
"""
from services.datasets import SyntheticSpec, generate_synthetic, save_dataset

NAME = 'gen-data'
HELP = 'write a DBPTNSR1 file of blurred Gaussian images'


def add_arguments(parser):
    parser.add_argument('output', help='dataset file to write')
    parser.add_argument('--count', type=int, default=4096)
    parser.add_argument('--channels', type=int, default=3)
    parser.add_argument('--size', type=int, default=32)
    parser.add_argument('--correlation-length', type=float, default=2.0)
    parser.add_argument('--seed', type=int, default=0)


def run(args):
    spec = SyntheticSpec(count=args.count, channels=args.channels, size=args.size,
                         correlation_length=args.correlation_length, seed=args.seed)
    print(f"[data] Generating {spec.count} images of {spec.channels}x{spec.size}x{spec.size}, "
          f"correlation length {spec.correlation_length}")
    save_dataset(args.output, generate_synthetic(spec))
    print(f"✓ Dataset written to {args.output}")
    return 0
