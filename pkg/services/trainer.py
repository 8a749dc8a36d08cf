# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
One pre-training run, BP or DBP, from config to run directory.

A run directory ends up holding:

    config.txt             the resolved configuration
    metrics.csv            one row per epoch (services/metrics.py)
    summary.json           best/final losses, timings, divergence if any
    checkpoint_best.ckpt   lowest validation loss so far (earlier epoch on ties)
    checkpoint_last.ckpt   the most recent epoch

Every random choice draws from its own generator keyed by (seed, stream,
epoch, batch), so a BP and a DBP run of the same seed see the same data
order, augmentations and masks, and a rerun reproduces the metrics exactly.
"""
import concurrent.futures
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

import config
from core.decorr import decorrelation_losses
from core.errors import ConfigError, NonFiniteGradientError, NumericalDivergenceError
from core.mae import MaeModel, decorr_sites, make_batch_masks, mae_loss, mae_loss_grad, patchify_batch
from core.optim import AdamWState, adamw_step, dbp_active, dbp_step, lr_at
from core.train_config import config_to_dict, format_config
from services.checkpoint import save_checkpoint
from services.datasets import (augment_batch, channel_stats, generate_synthetic, load_dataset,
                               normalize, split_dataset)
from services.metrics import Divergence, MetricsRecord, best_record, export_metrics
from utils.file_utils import atomic_write_text, ensure_dir

# Random streams, one per concern
STREAM_SHUFFLE = 0
STREAM_AUGMENT = 1
STREAM_MASK = 2
STREAM_DBP = 3
STREAM_VAL_MASK = 4


@dataclass
class TrainingResult:
    records: list
    run_dir: str
    model: MaeModel
    best_epoch: Optional[int] = None
    best_val_loss: Optional[float] = None
    divergence: Optional[Divergence] = None
    dbp_seconds: list = field(default_factory=list)

    @property
    def train_seconds(self):
        return self.records[-1].wall_seconds if self.records else 0.0


def stream_seed(*keys):
    """A 32-bit seed for one (seed, stream, ...) key."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def stream_rng(*keys):
    return np.random.default_rng([int(k) for k in keys])


def no_decay_names(model):
    """Biases, norm parameters and the mask token are not weight-decayed."""
    return frozenset(name for name in model.parameters()
                     if name.endswith(('.bias', '.gamma', '.beta')) or name == 'decoder.mask_token')


def load_training_data(cfg):
    """The full dataset of a run, before the split, in the model's dtype."""
    if cfg.data.path:
        data = load_dataset(cfg.data.path)
        expected = (cfg.mae.channels, cfg.mae.image_size, cfg.mae.image_size)
        if data.shape[1:] != expected:
            raise ConfigError(f"dataset {cfg.data.path} holds {data.shape[1:]} images, "
                              f"the model expects {expected}")
    else:
        data = generate_synthetic(cfg.synthetic_spec())
    return data.astype(cfg.mae.dtype, copy=False)


def evaluate_model(model, images, cfg, sites):
    """
    (validation loss, mean decorrelation loss) over ``images``, already normalized.

    Masks are fixed per validation batch and independent of the epoch, so
    successive evaluations are comparable. The decorrelation loss is measured
    on every row each site saw; nothing is updated.
    """
    batch_size = min(cfg.train.batch_size, len(images))
    p = cfg.mae.patch_size
    loss_sum = 0.0
    decorr_sum = 0.0
    decorr_batches = 0
    for b, start in enumerate(range(0, len(images), batch_size)):
        batch = images[start:start + batch_size]
        plans = make_batch_masks(len(batch), cfg.mae.num_patches, cfg.mae.mask_ratio,
                                 stream_seed(cfg.train.seed, STREAM_VAL_MASK, b))
        recon = model.forward(batch, plans)
        loss_sum += mae_loss(recon, patchify_batch(batch, p), plans,
                             cfg.mae.loss_on_masked_only, cfg.mae.norm_pix_loss) * len(batch)
        losses = decorrelation_losses(sites)
        if losses:
            decorr_sum += float(np.mean(list(losses.values())))
            decorr_batches += 1
    mean_decorr = decorr_sum / decorr_batches if decorr_batches else float('nan')
    return loss_sum / len(images), mean_decorr


def _notify(progress_cb, record, model):
    if progress_cb:
        try:
            progress_cb(record, model)
        except Exception as e:
            print(f"Error in training progress callback: {e}")


def _write_summary(run_dir, cfg, result):
    final = result.records[-1] if result.records else None
    summary = {
        'mode': cfg.train.mode,
        'seed': cfg.train.seed,
        'epochs_completed': len(result.records),
        'best_epoch': result.best_epoch,
        'best_val_loss': result.best_val_loss,
        'final_val_loss': final.val_loss if final else None,
        'train_seconds': result.train_seconds,
        'dbp_seconds_per_epoch': result.dbp_seconds,
        'divergence': None if result.divergence is None else {
            'epoch': result.divergence.epoch, 'site_id': result.divergence.site_id},
        'config': config_to_dict(cfg),
    }
    atomic_write_text(os.path.join(run_dir, config.SUMMARY_FILE),
                      json.dumps(summary, indent=2, sort_keys=True) + '\n')


def run_training(cfg, run_dir=None, progress_cb=None, clock=time.perf_counter,
                 evaluate=evaluate_model, data=None):
    """
    Train one model as ``cfg`` says and write its run directory.

    ``progress_cb(record, model)`` is called after every epoch. ``clock`` times
    the training phase only; validation runs outside the timed span. ``data``
    replaces the configured dataset (count x C x H x W, before the split).

    A diverged run still writes its metrics, with a trailing marker naming the
    epoch and site, and the summary; then the error is re-raised.
    """
    cfg.validate()
    run_dir = ensure_dir(run_dir or cfg.train.output_dir)
    atomic_write_text(os.path.join(run_dir, config.CONFIG_SNAPSHOT), format_config(cfg))

    dataset = data if data is not None else load_training_data(cfg)
    dataset = np.asarray(dataset).astype(cfg.mae.dtype, copy=False)
    train, val = split_dataset(dataset, cfg.data.val_fraction)
    mean, std = channel_stats(train)
    val_images = normalize(val, mean, std)

    dbp = cfg.is_dbp and cfg.decorr.eta > 0
    seed = cfg.train.seed
    model = MaeModel(cfg.mae, seed=seed, decorr=cfg.decorr if dbp else None)
    sites = decorr_sites(model, cfg.decorr.scope, cfg.decorr.per_linear_mode)
    opt = cfg.optimizer
    state = AdamWState(beta1=opt.beta1, beta2=opt.beta2, weight_decay=opt.weight_decay,
                       eps=opt.eps, no_decay=no_decay_names(model))
    schedule = cfg.schedule()
    augment_cfg = cfg.augment_config()

    n_train = len(train)
    batch_size = min(cfg.train.batch_size, n_train)
    steps = math.ceil(n_train / batch_size)
    best_path = os.path.join(run_dir, config.BEST_CHECKPOINT)
    last_path = os.path.join(run_dir, config.LAST_CHECKPOINT)
    metrics_path = os.path.join(run_dir, config.METRICS_FILE)

    result = TrainingResult(records=[], run_dir=run_dir, model=model)
    if cfg.train.epochs == 0:
        save_checkpoint(model, last_path, config=cfg, epoch=0)
        export_metrics([], metrics_path)
        _write_summary(run_dir, cfg, result)
        return result

    executor = None
    if dbp and config.SITE_WORKERS > 1:
        executor = concurrent.futures.ThreadPoolExecutor(max_workers=config.SITE_WORKERS)

    wall = 0.0
    epoch = 0
    try:
        for epoch in range(cfg.train.epochs):
            updating = dbp and dbp_active(epoch, cfg.decorr.stop_epoch)
            order = stream_rng(seed, STREAM_SHUFFLE, epoch).permutation(n_train)
            loss_sum = 0.0
            dbp_time = 0.0

            start = clock()
            for step in range(steps):
                idx = order[step * batch_size:(step + 1) * batch_size]
                lr = lr_at(schedule, epoch + step / steps)
                if cfg.data.augment:
                    images = augment_batch(train[idx], stream_rng(seed, STREAM_AUGMENT, epoch, step),
                                           augment_cfg, mean, std)
                else:
                    images = normalize(train[idx], mean, std)

                plans = make_batch_masks(len(idx), cfg.mae.num_patches, cfg.mae.mask_ratio,
                                         stream_seed(seed, STREAM_MASK, epoch, step))
                recon = model.forward(images, plans)
                target = patchify_batch(images, cfg.mae.patch_size)
                loss = mae_loss(recon, target, plans, cfg.mae.loss_on_masked_only, cfg.mae.norm_pix_loss)
                if not math.isfinite(loss):
                    raise NonFiniteGradientError('loss')
                model.backward(mae_loss_grad(recon, target, plans,
                                             cfg.mae.loss_on_masked_only, cfg.mae.norm_pix_loss))
                adamw_step(state, model.parameters(), model.gradients(), lr)

                if updating:
                    t0 = clock()
                    dbp_step(sites, cfg.decorr.eta, cfg.decorr.subsample_fraction,
                             stream_rng(seed, STREAM_DBP, epoch, step), epoch=epoch + 1,
                             stop_epoch=None, executor=executor)
                    dbp_time += clock() - t0
                loss_sum += loss * len(idx)
            wall += clock() - start

            val_loss, decorr_loss = evaluate(model, val_images, cfg, sites)
            record = MetricsRecord(epoch=epoch + 1, train_loss=loss_sum / n_train, val_loss=val_loss,
                                   mean_decorr_loss=decorr_loss, wall_seconds=wall,
                                   lr_W=lr_at(schedule, epoch + (steps - 1) / steps),
                                   lr_R=cfg.decorr.eta if updating else 0.0)
            result.records.append(record)
            result.dbp_seconds.append(dbp_time)

            best = best_record(result.records)
            if best is record:
                result.best_epoch, result.best_val_loss = record.epoch, record.val_loss
                save_checkpoint(model, best_path, optimizer_state=state, config=cfg, epoch=record.epoch)
            last_epoch = epoch + 1 == cfg.train.epochs
            if last_epoch or record.epoch % config.CHECKPOINT_EVERY == 0:
                save_checkpoint(model, last_path, optimizer_state=state, config=cfg, epoch=record.epoch)
            export_metrics(result.records, metrics_path)
            _notify(progress_cb, record, model)
    except (NumericalDivergenceError, NonFiniteGradientError) as e:
        result.divergence = Divergence(epoch=epoch + 1, site_id=getattr(e, 'site_id', None)
                                       or getattr(e, 'name', None))
        print(f"✗ [train] {cfg.train.mode} seed {seed} diverged in epoch {epoch + 1}: {e}")
        export_metrics(result.records, metrics_path, result.divergence)
        _write_summary(run_dir, cfg, result)
        raise
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    _write_summary(run_dir, cfg, result)
    return result
