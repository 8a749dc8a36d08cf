# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
import os

import numpy as np
import pytest

import config
from app import EXIT_CONFIG, EXIT_DIVERGED, EXIT_FAILURE, EXIT_OK, exit_code_for, main
from core.errors import (BadMagicError, CheckpointError, ConfigError, NonFiniteGradientError,
                         NumericalDivergenceError, RunFailedError)
from core.train_config import derive, format_config, parse_config_text
from services.checkpoint import load_checkpoint
from services.datasets import load_dataset


@pytest.fixture
def config_file(tiny_config, tmp_path):
    path = tmp_path / 'tiny.cfg'
    path.write_text(format_config(derive(tiny_config, {'train.epochs': 1})))
    return str(path)


@pytest.mark.parametrize('error, code', [
    (ConfigError('bad'), EXIT_CONFIG),
    (BadMagicError('bad'), EXIT_CONFIG),
    (NumericalDivergenceError('site', 1), EXIT_DIVERGED),
    (NonFiniteGradientError('loss'), EXIT_DIVERGED),
    (RunFailedError('DBP', 0, 'diverged', diverged=True), EXIT_DIVERGED),
    (RunFailedError('DBP', 0, 'broken'), EXIT_FAILURE),
    (CheckpointError('bad'), EXIT_FAILURE),
])
def test_exit_codes(error, code):
    assert exit_code_for(error) == code


def test_show_config_prints_a_parseable_config(capsys):
    assert main(['show-config', '--decorr.eta', '2e-4', '--train.mode', 'BP']) == EXIT_OK
    cfg = parse_config_text(capsys.readouterr().out)
    assert cfg.decorr.eta == 2e-4
    assert cfg.train.mode == 'BP'


def test_unknown_value_is_a_config_error(capsys):
    assert main(['show-config', '--train.epochs', 'many']) == EXIT_CONFIG
    assert 'train.epochs' in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(['train', '--config', str(tmp_path / 'absent.cfg')]) == EXIT_CONFIG


def test_train(config_file, tmp_path):
    run_dir = str(tmp_path / 'run')
    assert main(['train', '--config', config_file, '--run-dir', run_dir]) == EXIT_OK
    assert os.path.exists(os.path.join(run_dir, config.METRICS_FILE))


def test_train_divergence_exit_code(config_file, tmp_path):
    code = main(['train', '--config', config_file, '--decorr.eta', '1e9',
                 '--run-dir', str(tmp_path / 'run')])
    assert code == EXIT_DIVERGED


def test_compare_needs_two_seeds(config_file, tmp_path):
    code = main(['compare', '--config', config_file, '--seeds', '0', '--out', str(tmp_path / 'c')])
    assert code == EXIT_CONFIG


def test_compare_with_zero_rate_runs(config_file, tmp_path, capsys):
    out = str(tmp_path / 'c')
    code = main(['compare', '--config', config_file, '--decorr.eta', '0', '--seeds', '0,1',
                 '--out', out, '--quiet'])
    assert code == EXIT_OK
    assert 'p = 1' in capsys.readouterr().out


def test_gen_data(tmp_path):
    path = str(tmp_path / 'set.bin')
    assert main(['gen-data', path, '--count', '3', '--channels', '1', '--size', '8']) == EXIT_OK
    data = load_dataset(path)
    assert data.shape == (3, 1, 8, 8)
    assert data.dtype == np.float32


def test_fuse(config_file, tmp_path):
    run_dir = str(tmp_path / 'run')
    assert main(['train', '--config', config_file, '--run-dir', run_dir]) == EXIT_OK
    fused = str(tmp_path / 'fused.ckpt')
    assert main(['fuse', os.path.join(run_dir, config.LAST_CHECKPOINT), fused]) == EXIT_OK
    ckpt = load_checkpoint(fused)
    assert ckpt.fused
    assert not ckpt.model.decorrelation_matrices()
    source = load_checkpoint(os.path.join(run_dir, config.LAST_CHECKPOINT))
    assert source.config is not None
    assert ckpt.config == source.config


def test_ablate_rejects_unknown_scope(config_file, tmp_path):
    code = main(['ablate', '--config', config_file, '--scopes', 'everything',
                 '--out', str(tmp_path / 'a')])
    assert code == EXIT_CONFIG
