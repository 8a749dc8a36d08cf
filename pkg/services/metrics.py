# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Per-epoch metrics: the CSV every run writes, and the statistics compare,
sweep and ablate compute from several of them.
"""
import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy import stats

from core.errors import UndefinedMetricError
from utils.file_utils import atomic_write_text

CSV_HEADER = 'epoch,train_loss,val_loss,mean_decorr_loss,wall_seconds,lr_W,lr_R'
DIVERGENCE_PREFIX = '# diverged'


@dataclass
class MetricsRecord:
    """
    One finished epoch. ``epoch`` counts finished epochs, so the first record
    is epoch 1. ``wall_seconds`` is cumulative training time, validation
    excluded; ``lr_R`` is 0 whenever R was not updated during the epoch.
    """
    epoch: int
    train_loss: float
    val_loss: float
    mean_decorr_loss: float
    wall_seconds: float
    lr_W: float
    lr_R: float


@dataclass
class Divergence:
    epoch: int
    site_id: Optional[str]


def _fmt(value):
    return format(float(value), '.9g')


def format_metrics(records, divergence=None):
    lines = [CSV_HEADER]
    for r in records:
        lines.append(','.join([str(r.epoch), _fmt(r.train_loss), _fmt(r.val_loss),
                               _fmt(r.mean_decorr_loss), _fmt(r.wall_seconds),
                               _fmt(r.lr_W), _fmt(r.lr_R)]))
    if divergence is not None:
        lines.append(f"{DIVERGENCE_PREFIX} epoch={divergence.epoch} site={divergence.site_id or '-'}")
    return '\n'.join(lines) + '\n'


def export_metrics(records, path, divergence=None):
    """Write the metrics CSV; a diverged run gets a trailing ``# diverged`` line."""
    atomic_write_text(path, format_metrics(records, divergence))


def _parse_divergence(line):
    values = dict(part.split('=', 1) for part in line[len(DIVERGENCE_PREFIX):].split() if '=' in part)
    site = values.get('site')
    return Divergence(epoch=int(values.get('epoch', 0)), site_id=None if site in (None, '-') else site)


def parse_metrics(text):
    """(records, divergence or None) from the text of a metrics CSV."""
    records = []
    divergence = None
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValueError("not a metrics file: header row is missing")
    names = [f.name for f in fields(MetricsRecord)]
    for line in lines[1:]:
        if line.startswith('#'):
            if line.startswith(DIVERGENCE_PREFIX):
                divergence = _parse_divergence(line)
            continue
        values = line.split(',')
        if len(values) != len(names):
            raise ValueError(f"metrics row has {len(values)} columns, expected {len(names)}: {line}")
        records.append(MetricsRecord(int(values[0]), *(float(v) for v in values[1:])))
    return records, divergence


def read_metrics(path):
    with open(path, 'r', encoding='utf-8') as f:
        return parse_metrics(f.read())


# --- Statistics ---------------------------------------------------------------

def welch_p_value(a, b):
    """
    Two-sided p-value of Welch's t-test. Identical samples give exactly 1.0;
    two constant samples give 1.0 when equal and 0.0 when not.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise UndefinedMetricError("Welch's t-test needs at least two values per group")
    if np.array_equal(a, b):
        return 1.0
    p = float(stats.ttest_ind(a, b, equal_var=False).pvalue)
    if math.isnan(p):
        return 1.0 if a.mean() == b.mean() else 0.0
    return p


@dataclass
class Band:
    mean: float
    std: float
    stderr: float


def band(values):
    """Mean with sample std and standard error (both 0 for a single value)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise UndefinedMetricError("no values to aggregate")
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return Band(mean=float(values.mean()), std=std, stderr=std / math.sqrt(values.size))


AGGREGATED = ('train_loss', 'val_loss', 'mean_decorr_loss', 'wall_seconds')


def aggregate_runs(runs):
    """
    Per-epoch bands over several runs (lists of MetricsRecord), one dict per
    epoch: {'epoch': e, 'val_loss': Band, ...}. Epochs past the shortest run
    are left out.
    """
    runs = [list(records) for records in runs]
    if not runs:
        return []
    length = min(len(records) for records in runs)
    table = []
    for i in range(length):
        row = {'epoch': runs[0][i].epoch}
        for name in AGGREGATED:
            row[name] = band([getattr(records[i], name) for records in runs])
        table.append(row)
    return table


def best_record(records):
    """Lowest validation loss; ties go to the earlier epoch."""
    best = None
    for record in records:
        if best is None or record.val_loss < best.val_loss:
            best = record
    return best


def first_reaching(records, target):
    """The first record whose validation loss is at or below ``target``, or None."""
    for record in records:
        if record.val_loss <= target:
            return record
    return None


def loss_at_time(records, seconds):
    """Validation loss of the last epoch finished within ``seconds`` of training."""
    reached = [record for record in records if record.wall_seconds <= seconds]
    return reached[-1].val_loss if reached else None


def mean_epoch_seconds(records):
    if not records:
        return None
    return records[-1].wall_seconds / len(records)
