# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Experiments made of several training runs: the paired BP-vs-DBP comparison
over seeds, the learning-rate sweep and the DBP ablations.

Every run is independent, so runs may go to a process pool
(config.RUN_WORKERS). Results are collected first and aggregated only once
every run has finished, in job order, so the summary does not depend on the
worker count.
"""
import concurrent.futures
import itertools
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

import config
from core.errors import ConfigError, DbpError, RunFailedError
from core.progress import report_epoch
from core.train_config import derive
from services.metrics import (aggregate_runs, band, best_record, first_reaching, loss_at_time,
                              mean_epoch_seconds, read_metrics, welch_p_value)
from services.trainer import run_training
from utils.file_utils import atomic_write_text

COMPARISON_FILE = 'comparison.json'
SWEEP_FILE = 'sweep.csv'
ABLATION_FILE = 'ablation.json'


@dataclass
class RunJob:
    label: str
    config: object
    run_dir: str
    verbose: bool = True


@dataclass
class RunOutcome:
    """What a run left behind, without the model (outcomes cross process boundaries)."""
    label: str
    mode: str
    seed: int
    run_dir: str
    records: list = field(default_factory=list)
    dbp_seconds: list = field(default_factory=list)
    divergence: Optional[object] = None
    error: Optional[str] = None
    error_type: Optional[str] = None

    @property
    def ok(self):
        return self.error is None


def _execute(job):
    """Run one job; a DbpError becomes part of the outcome instead of escaping."""
    cfg = job.config
    mode, seed, epochs = cfg.train.mode, cfg.train.seed, cfg.train.epochs
    progress_cb = (lambda record, model: report_epoch(record, mode, seed, epochs)) if job.verbose else None
    outcome = RunOutcome(label=job.label, mode=mode, seed=seed, run_dir=job.run_dir)
    try:
        result = run_training(cfg, run_dir=job.run_dir, progress_cb=progress_cb)
        outcome.records = result.records
        outcome.dbp_seconds = result.dbp_seconds
    except DbpError as e:
        outcome.error = str(e)
        outcome.error_type = type(e).__name__
        # a diverged run leaves its metrics up to the failing epoch behind
        metrics_path = os.path.join(job.run_dir, config.METRICS_FILE)
        if os.path.exists(metrics_path):
            outcome.records, outcome.divergence = read_metrics(metrics_path)
    return outcome


def run_jobs(jobs, workers=None, progress_cb=None):
    """
    Run every job and return the outcomes in job order.

    With ``workers`` > 1 at most that many runs are in flight at once, each in
    its own process. ``progress_cb(completed, total, outcome)`` is called as
    runs finish, in completion order.
    """
    workers = max(1, workers if workers is not None else config.RUN_WORKERS)
    total = len(jobs)
    outcomes = [None] * total
    completed = 0

    def _handle(index, outcome):
        nonlocal completed
        completed += 1
        outcomes[index] = outcome
        if progress_cb:
            try:
                progress_cb(completed, total, outcome)
            except Exception as e:
                print(f"Error in experiment progress callback: {e}")

    if workers == 1:
        for index, job in enumerate(jobs):
            _handle(index, _execute(job))
        return outcomes

    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
        pending = iter(enumerate(jobs))
        futures = {executor.submit(_execute, job): index
                   for index, job in itertools.islice(pending, workers)}
        while futures:
            done, _ = concurrent.futures.wait(futures, return_when=concurrent.futures.FIRST_COMPLETED)
            for future in done:
                index = futures.pop(future)
                _handle(index, future.result())
                for next_index, job in itertools.islice(pending, 1):
                    futures[executor.submit(_execute, job)] = next_index
    return outcomes


def _validated(jobs):
    """Check every run config before the first run starts."""
    for job in jobs:
        job.config.validate()
    return jobs


def _report_run(completed, total, outcome):
    mark = '✓' if outcome.ok else '✗'
    detail = '' if outcome.ok else f": {outcome.error}"
    print(f"{mark} [{completed}/{total}] {outcome.label}{detail}")


def _write_json(path, payload):
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + '\n')


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if hasattr(value, '__dataclass_fields__'):
        return asdict(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


# --- Paired comparison --------------------------------------------------------

def arm_config(base, mode, seed):
    """
    The config of one arm. A DBP arm with a zero decorrelation rate is a BP
    run, since R never moves.
    """
    if mode == 'DBP' and not base.decorr.eta > 0:
        mode = 'BP'
    return derive(base, {'train.mode': mode, 'train.seed': seed})


@dataclass
class SeedComparison:
    seed: int
    bp_best_val_loss: float
    bp_best_epoch: int
    bp_final_val_loss: float
    dbp_best_val_loss: float
    dbp_best_epoch: int
    dbp_final_val_loss: float
    bp_epochs_to_target: Optional[int]
    dbp_epochs_to_target: Optional[int]
    bp_seconds_to_target: Optional[float]
    dbp_seconds_to_target: Optional[float]
    dbp_equal_time_loss: Optional[float]
    bp_final_decorr_loss: float
    dbp_final_decorr_loss: float

    @property
    def dbp_faster(self):
        return (self.dbp_epochs_to_target is not None
                and self.dbp_epochs_to_target < self.bp_epochs_to_target)


@dataclass
class PairedSummary:
    seeds: list
    per_seed: list
    per_epoch: dict
    best: dict
    final: dict
    epochs_to_target: dict
    seconds_to_target: dict
    equal_time_loss: Optional[object]
    p_value: float
    epoch_overhead_percent: Optional[float]
    wall_clock_reduction_percent: Optional[float]
    dbp_faster_seeds: int

    def deltas(self):
        """DBP minus BP of the mean best and final validation losses."""
        return {'best_val_loss': self.best['DBP'].mean - self.best['BP'].mean,
                'final_val_loss': self.final['DBP'].mean - self.final['BP'].mean}


def _compare_seed(seed, bp, dbp):
    bp_best, dbp_best = best_record(bp.records), best_record(dbp.records)
    target = bp_best.val_loss
    bp_hit, dbp_hit = first_reaching(bp.records, target), first_reaching(dbp.records, target)
    return SeedComparison(
        seed=seed,
        bp_best_val_loss=bp_best.val_loss, bp_best_epoch=bp_best.epoch,
        bp_final_val_loss=bp.records[-1].val_loss,
        dbp_best_val_loss=dbp_best.val_loss, dbp_best_epoch=dbp_best.epoch,
        dbp_final_val_loss=dbp.records[-1].val_loss,
        bp_epochs_to_target=bp_hit.epoch,
        dbp_epochs_to_target=dbp_hit.epoch if dbp_hit else None,
        bp_seconds_to_target=bp_hit.wall_seconds,
        dbp_seconds_to_target=dbp_hit.wall_seconds if dbp_hit else None,
        dbp_equal_time_loss=loss_at_time(dbp.records, bp.records[-1].wall_seconds),
        bp_final_decorr_loss=bp.records[-1].mean_decorr_loss,
        dbp_final_decorr_loss=dbp.records[-1].mean_decorr_loss,
    )


def summarize_pair(seeds, bp_outcomes, dbp_outcomes):
    """Aggregate finished BP and DBP runs, paired by seed."""
    per_seed = [_compare_seed(seed, bp, dbp) for seed, bp, dbp in zip(seeds, bp_outcomes, dbp_outcomes)]
    arms = {'BP': bp_outcomes, 'DBP': dbp_outcomes}

    bp_epoch_secs = [mean_epoch_seconds(o.records) for o in bp_outcomes]
    dbp_epoch_secs = [mean_epoch_seconds(o.records) for o in dbp_outcomes]
    overhead = None
    if np.mean(bp_epoch_secs) > 0:
        overhead = (float(np.mean(dbp_epoch_secs)) / float(np.mean(bp_epoch_secs)) - 1.0) * 100.0

    reductions = [(1.0 - s.dbp_seconds_to_target / s.bp_seconds_to_target) * 100.0
                  for s in per_seed
                  if s.dbp_seconds_to_target is not None and s.bp_seconds_to_target > 0]
    equal_time = [s.dbp_equal_time_loss for s in per_seed if s.dbp_equal_time_loss is not None]

    def _reached(values):
        values = [v for v in values if v is not None]
        return band(values) if values else None

    return PairedSummary(
        seeds=list(seeds),
        per_seed=per_seed,
        per_epoch={mode: aggregate_runs([o.records for o in outcomes]) for mode, outcomes in arms.items()},
        best={'BP': band([s.bp_best_val_loss for s in per_seed]),
              'DBP': band([s.dbp_best_val_loss for s in per_seed])},
        final={'BP': band([s.bp_final_val_loss for s in per_seed]),
               'DBP': band([s.dbp_final_val_loss for s in per_seed])},
        epochs_to_target={'BP': _reached([s.bp_epochs_to_target for s in per_seed]),
                          'DBP': _reached([s.dbp_epochs_to_target for s in per_seed])},
        seconds_to_target={'BP': _reached([s.bp_seconds_to_target for s in per_seed]),
                           'DBP': _reached([s.dbp_seconds_to_target for s in per_seed])},
        equal_time_loss=band(equal_time) if equal_time else None,
        p_value=welch_p_value([s.bp_final_val_loss for s in per_seed],
                              [s.dbp_final_val_loss for s in per_seed]),
        epoch_overhead_percent=overhead,
        wall_clock_reduction_percent=float(np.mean(reductions)) if reductions else None,
        dbp_faster_seeds=sum(1 for s in per_seed if s.dbp_faster),
    )


def run_paired_comparison(base, seeds, workers=None, output_dir=None, verbose=True):
    """
    Train BP and DBP once per seed and compare them.

    Both arms of a seed see the same data order, augmentations and masks.
    A failed run aborts the comparison with RunFailedError naming its mode and
    seed, after every other run has finished.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ConfigError(f"a paired comparison needs at least 2 seeds, got {len(seeds)}")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seeds must be distinct, got {seeds}")
    output_dir = output_dir or os.path.join(base.train.output_dir, 'compare')

    jobs = []
    for mode in ('BP', 'DBP'):
        for seed in seeds:
            jobs.append(RunJob(label=f"{mode} seed {seed}", config=arm_config(base, mode, seed),
                               run_dir=os.path.join(output_dir, f"{mode.lower()}_seed{seed}"),
                               verbose=verbose))
    outcomes = run_jobs(_validated(jobs), workers, progress_cb=_report_run)
    for job, outcome in zip(jobs, outcomes):
        if not outcome.ok:
            mode = 'DBP' if job.label.startswith('DBP') else 'BP'
            raise RunFailedError(mode, outcome.seed, f"{outcome.error_type}: {outcome.error}",
                                 diverged=outcome.divergence is not None)
        if not outcome.records:
            raise RunFailedError(outcome.mode, outcome.seed, "no epochs to compare (train.epochs = 0)")

    n = len(seeds)
    summary = summarize_pair(seeds, outcomes[:n], outcomes[n:])
    _write_json(os.path.join(output_dir, COMPARISON_FILE), summary)
    return summary


# --- Learning-rate sweep ------------------------------------------------------

@dataclass
class SweepCell:
    lr_W: float
    lr_R: float
    mode: str
    final_train_loss: Optional[float] = None
    final_val_loss: Optional[float] = None
    best_val_loss: Optional[float] = None
    best_epoch: Optional[int] = None
    error: Optional[str] = None
    records: list = field(default_factory=list, repr=False)


def cell_config(base, lr_w, lr_r, epochs=None):
    """One grid cell: lr_R = 0 is plain BP."""
    changes = {'optimizer.base_lr': lr_w, 'optimizer.dbp_base_lr': None,
               'decorr.eta': lr_r, 'train.mode': 'DBP' if lr_r > 0 else 'BP'}
    if epochs is not None:
        changes['train.epochs'] = epochs
    return derive(base, changes)


def format_sweep(cells):
    lines = ['lr_W,lr_R,mode,final_train_loss,final_val_loss,best_val_loss,best_epoch,status']

    def _f(value):
        return '' if value is None else format(value, '.9g')

    for cell in cells:
        status = 'ok' if cell.error is None else 'failed: ' + cell.error.replace(',', ';')
        lines.append(','.join([_f(cell.lr_W), _f(cell.lr_R), cell.mode, _f(cell.final_train_loss),
                               _f(cell.final_val_loss), _f(cell.best_val_loss),
                               '' if cell.best_epoch is None else str(cell.best_epoch), status]))
    return '\n'.join(lines) + '\n'


def sweep(base, lr_w, lr_r, epochs=None, workers=None, output_dir=None, verbose=True):
    """
    One run per (lr_W, lr_R) cell, row-major over lr_W. A failed cell is
    recorded with its error and the sweep goes on.
    """
    lr_w, lr_r = list(lr_w), list(lr_r)
    if not lr_w or not lr_r:
        raise ConfigError("a sweep needs at least one lr_W and one lr_R value")
    if any(v < 0 for v in lr_w + lr_r):
        raise ConfigError("sweep learning rates must not be negative")
    output_dir = output_dir or os.path.join(base.train.output_dir, 'sweep')

    jobs, cells = [], []
    for w, r in itertools.product(lr_w, lr_r):
        cfg = cell_config(base, w, r, epochs)
        cells.append(SweepCell(lr_W=w, lr_R=r, mode=cfg.train.mode))
        jobs.append(RunJob(label=f"lr_W={w:g} lr_R={r:g}", config=cfg,
                           run_dir=os.path.join(output_dir, f"w{w:g}_r{r:g}"), verbose=verbose))

    for cell, outcome in zip(cells, run_jobs(_validated(jobs), workers, progress_cb=_report_run)):
        cell.records = outcome.records
        cell.error = outcome.error
        if outcome.records:
            best = best_record(outcome.records)
            cell.final_train_loss = outcome.records[-1].train_loss
            cell.final_val_loss = outcome.records[-1].val_loss
            cell.best_val_loss, cell.best_epoch = best.val_loss, best.epoch

    atomic_write_text(os.path.join(output_dir, SWEEP_FILE), format_sweep(cells))
    return cells


def best_cell(cells):
    """The finished cell with the lowest best validation loss."""
    finished = [cell for cell in cells if cell.error is None and cell.best_val_loss is not None]
    return min(finished, key=lambda cell: cell.best_val_loss) if finished else None


# --- Ablations ----------------------------------------------------------------

@dataclass
class AblationRow:
    label: str
    changes: dict
    final_val_loss: Optional[object] = None
    best_val_loss: Optional[object] = None
    final_decorr_loss: Optional[object] = None
    dbp_seconds_per_epoch: Optional[float] = None
    diverged: int = 0
    failed: int = 0


def variant_label(changes):
    return ', '.join(f"{key}={value}" for key, value in changes.items())


def ablate(base, variants, seeds, workers=None, output_dir=None, verbose=True):
    """
    DBP runs of every variant (dict of dotted key -> typed value) for every
    seed, e.g. subsample fractions or decorrelation scopes. Diverged runs are
    counted per variant rather than aborting the ablation.
    """
    variants, seeds = list(variants), list(seeds)
    if not variants or not seeds:
        raise ConfigError("an ablation needs at least one variant and one seed")
    output_dir = output_dir or os.path.join(base.train.output_dir, 'ablate')

    jobs = []
    for v, changes in enumerate(variants):
        for seed in seeds:
            cfg = derive(base, dict(changes, **{'train.mode': 'DBP', 'train.seed': seed}))
            jobs.append(RunJob(label=f"{variant_label(changes)} seed {seed}", config=cfg,
                               run_dir=os.path.join(output_dir, f"variant{v}_seed{seed}"),
                               verbose=verbose))
    outcomes = run_jobs(_validated(jobs), workers, progress_cb=_report_run)

    rows = []
    for v, changes in enumerate(variants):
        group = outcomes[v * len(seeds):(v + 1) * len(seeds)]
        finished = [o for o in group if o.ok and o.records]
        row = AblationRow(label=variant_label(changes), changes=dict(changes),
                          diverged=sum(1 for o in group if o.error_type in
                                       ('NumericalDivergenceError', 'NonFiniteGradientError')),
                          failed=sum(1 for o in group if not o.ok))
        if finished:
            row.final_val_loss = band([o.records[-1].val_loss for o in finished])
            row.best_val_loss = band([best_record(o.records).val_loss for o in finished])
            row.final_decorr_loss = band([o.records[-1].mean_decorr_loss for o in finished])
            row.dbp_seconds_per_epoch = float(np.mean([np.mean(o.dbp_seconds) for o in finished]))
        rows.append(row)

    _write_json(os.path.join(output_dir, ABLATION_FILE), rows)
    return rows
