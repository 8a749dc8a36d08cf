# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""Core building blocks: decorrelation, the transformer layers, the MAE model, the optimizers, run configuration and progress reporting."""
