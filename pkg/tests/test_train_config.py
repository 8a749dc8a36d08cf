# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
import pytest

from core.errors import ConfigError
from core.train_config import (TrainConfig, config_from_dict, config_keys, config_to_dict, derive,
                               format_config, load_config, parse_config_text, set_value)


def test_defaults_validate():
    cfg = TrainConfig().validate()
    assert cfg.is_dbp
    assert cfg.decorr.subsample_fraction == 0.10
    assert cfg.optimizer.beta2 == 0.95


def test_parse_dotted_keys():
    cfg = parse_config_text("""
        # a BP run
        train.mode = BP
        train.epochs = 12      # short
        decorr.eta = 1e-3
        decorr.stop_epoch = 5
        data.augment = false
        data.path = none
    """)
    assert cfg.train.mode == 'BP'
    assert cfg.train.epochs == 12
    assert cfg.decorr.eta == 1e-3
    assert cfg.decorr.stop_epoch == 5
    assert cfg.data.augment is False
    assert cfg.data.path is None


def test_unknown_key_is_an_error():
    with pytest.raises(ConfigError, match='decorr.etta'):
        parse_config_text('decorr.etta = 1e-3')


def test_unknown_section_is_an_error():
    with pytest.raises(ConfigError):
        parse_config_text('model.depth = 3')


def test_duplicate_key_is_an_error():
    with pytest.raises(ConfigError):
        parse_config_text('train.epochs = 1\ntrain.epochs = 2')


@pytest.mark.parametrize('line', ['train.epochs = many', 'data.augment = maybe', 'train.epochs'])
def test_malformed_lines(line):
    with pytest.raises(ConfigError):
        parse_config_text(line)


def test_format_parses_back():
    cfg = derive(TrainConfig(), {'decorr.eta': 3e-4, 'decorr.stop_epoch': 7,
                                 'train.mode': 'BP', 'data.path': '/tmp/set.bin'})
    assert parse_config_text(format_config(cfg)) == cfg


def test_every_key_is_formatted():
    text = format_config(TrainConfig())
    for key, _ in config_keys():
        assert f"{key} = " in text


def test_dict_round_trip():
    cfg = derive(TrainConfig(), {'mae.depth': 2, 'decorr.scope': 'full_model'})
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_load_with_overrides(tmp_path):
    path = tmp_path / 'run.cfg'
    path.write_text('train.epochs = 4\ndecorr.eta = 1e-3\n')
    cfg = load_config(str(path), {'train.epochs': '9', 'train.seed': '3'})
    assert cfg.train.epochs == 9
    assert cfg.train.seed == 3
    assert cfg.decorr.eta == 1e-3


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'absent.cfg'))


def test_derive_does_not_touch_the_original():
    base = TrainConfig()
    derived = derive(base, {'train.epochs': 1})
    assert base.train.epochs == 60
    assert derived.train.epochs == 1


def test_set_value_coerces_optional_float():
    cfg = TrainConfig()
    set_value(cfg, 'optimizer.dbp_base_lr', '2e-3')
    assert cfg.optimizer.dbp_base_lr == 2e-3
    assert cfg.w_lr() == 2e-3
    set_value(cfg, 'train.mode', 'BP')
    assert cfg.w_lr() == cfg.optimizer.base_lr


def test_warmup_is_capped_at_the_run_length():
    cfg = derive(TrainConfig(), {'train.epochs': 2, 'optimizer.warmup_epochs': 5})
    schedule = cfg.schedule()
    assert schedule.warmup_epochs == 2
    assert schedule.total_epochs == 2


def test_synthetic_spec_follows_the_model():
    cfg = derive(TrainConfig(), {'mae.channels': 1, 'mae.image_size': 16})
    spec = cfg.synthetic_spec()
    assert (spec.channels, spec.size) == (1, 16)


@pytest.mark.parametrize('changes', [
    {'train.mode': 'SGD'},
    {'train.mode': 'DBP', 'decorr.eta': 0.0},
    {'train.epochs': -1},
    {'train.batch_size': 0},
    {'data.val_fraction': 1.0},
    {'data.synthetic_count': 1},
    {'decorr.subsample_fraction': 0.0},
    {'mae.mask_ratio': 1.0},
    {'data.crop_scale_min': 0.0},
])
def test_invalid_configs(changes):
    with pytest.raises(ConfigError):
        derive(TrainConfig(), changes).validate()


def test_bp_mode_accepts_zero_eta():
    derive(TrainConfig(), {'train.mode': 'BP', 'decorr.eta': 0.0}).validate()


def test_full_scale_values_form_a_valid_config():
    import config
    cfg = derive(TrainConfig(), config.FULL_SCALE).validate()
    assert cfg.mae.num_patches == 196
    assert cfg.w_lr() == 1.0e-3
