# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""Service modules for DBP-MAE: datasets, checkpoints, metrics, training runs and experiments"""
