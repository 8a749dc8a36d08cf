# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
import numpy as np
import pytest

from core.decorr import DecorrConfig, Scope
from core.errors import CheckpointError, CheckpointMismatchError, CheckpointVersionError
from core.mae import MaeConfig, MaeModel, make_batch_masks
from core.optim import AdamWState, adamw_step
from core.train_config import TrainConfig, derive
from services.checkpoint import (CHECKPOINT_MAGIC, decode_checkpoint, encode_checkpoint,
                                 load_checkpoint, save_checkpoint)


def _config(**changes):
    values = dict(image_size=8, patch_size=4, channels=2, embed_dim=8, depth=1, heads=2,
                  decoder_embed_dim=8, decoder_depth=1, decoder_heads=2, mlp_ratio=2.0,
                  mask_ratio=0.5)
    values.update(changes)
    return MaeConfig(**values)


def _trained_looking_model(rng, cfg=None, scope=Scope.FULL_MODEL):
    model = MaeModel(cfg or _config(), seed=0, decorr=DecorrConfig(scope=scope))
    for value in model.parameters().values():
        value[...] += rng.normal(scale=0.1, size=value.shape).astype(value.dtype)
    for R in model.decorrelation_matrices().values():
        R.values[...] += rng.normal(scale=0.05, size=R.values.shape).astype(R.values.dtype)
    return model


def test_unfused_round_trip_is_bit_exact(tmp_path, rng):
    model = _trained_looking_model(rng)
    path = str(tmp_path / 'model.ckpt')
    save_checkpoint(model, path, epoch=7)
    loaded = load_checkpoint(path)

    assert loaded.epoch == 7
    assert not loaded.fused
    original, restored = model.parameters(), loaded.model.parameters()
    assert list(original) == list(restored)
    for name in original:
        assert restored[name].dtype == original[name].dtype
        np.testing.assert_array_equal(restored[name], original[name])
    stored_r = loaded.model.decorrelation_matrices()
    assert set(stored_r) == set(model.decorrelation_matrices())
    for site_id, R in model.decorrelation_matrices().items():
        np.testing.assert_array_equal(stored_r[site_id].values, R.values)


def test_identity_matrices_fuse_to_the_same_weights(rng):
    model = MaeModel(_config(), seed=0, decorr=DecorrConfig())
    _, _, _, tensors = decode_checkpoint(encode_checkpoint(model, fuse=True))
    assert not any(name.startswith('decorr/') for name in tensors)
    for name, value in model.parameters().items():
        np.testing.assert_array_equal(tensors[f'param/{name}'], value)


def test_fused_checkpoint_reconstructs_the_same(tmp_path, rng):
    cfg = _config(dtype='float64')
    model = _trained_looking_model(rng, cfg)
    images = rng.normal(size=(3, 2, 8, 8)).astype(np.float64)
    plans = make_batch_masks(3, cfg.num_patches, cfg.mask_ratio, batch_seed=2)
    expected = model.forward(images, plans)

    path = str(tmp_path / 'fused.ckpt')
    save_checkpoint(model, path, fuse=True)
    assert model.decorrelation_matrices()
    loaded = load_checkpoint(path)
    assert loaded.fused
    assert not loaded.model.decorrelation_matrices()
    np.testing.assert_allclose(loaded.model.forward(images, plans), expected, atol=1e-5)


def test_fuse_on_load(tmp_path, rng):
    model = _trained_looking_model(rng)
    path = str(tmp_path / 'model.ckpt')
    save_checkpoint(model, path)
    loaded = load_checkpoint(path, fuse=True)
    assert loaded.fused
    assert not loaded.model.decorrelation_matrices()


def test_optimizer_state_and_config_round_trip(tmp_path, rng):
    model = MaeModel(_config(), seed=0)
    params = model.parameters()
    state = AdamWState(no_decay=frozenset({'decoder.mask_token'}))
    adamw_step(state, params, {k: np.ones_like(v) for k, v in params.items()}, lr=1e-3)
    cfg = derive(TrainConfig(), {'train.seed': 4})

    path = str(tmp_path / 'model.ckpt')
    save_checkpoint(model, path, optimizer_state=state, config=cfg, extra={'val_loss': 0.5})
    loaded = load_checkpoint(path)

    restored = loaded.optimizer_state
    assert restored.step == 1
    assert restored.no_decay == state.no_decay
    for name in state.first_moment:
        np.testing.assert_array_equal(restored.first_moment[name], state.first_moment[name])
        np.testing.assert_array_equal(restored.second_moment[name], state.second_moment[name])
        # Moments are kept in float64 for float32 models too
        assert params[name].dtype == np.float32
        assert restored.first_moment[name].dtype == np.float64
        assert restored.second_moment[name].dtype == np.float64
    assert loaded.config['train']['seed'] == 4
    assert loaded.metadata == {'val_loss': 0.5}


def test_wrong_model_settings(tmp_path, rng):
    path = str(tmp_path / 'model.ckpt')
    save_checkpoint(MaeModel(_config(), seed=0), path)
    expected = derive(TrainConfig(), {'mae.depth': 2})
    with pytest.raises(CheckpointMismatchError, match='mae.depth'):
        load_checkpoint(path, expected_config=expected)


def test_bad_magic():
    raw = bytearray(encode_checkpoint(MaeModel(_config(), seed=0)))
    assert raw[:8] == CHECKPOINT_MAGIC
    raw[0:1] = b'X'
    with pytest.raises(CheckpointError):
        decode_checkpoint(bytes(raw))


def test_unknown_version():
    raw = bytearray(encode_checkpoint(MaeModel(_config(), seed=0)))
    raw[8] = 2
    with pytest.raises(CheckpointVersionError):
        decode_checkpoint(bytes(raw))


def test_truncated_and_padded_files():
    raw = encode_checkpoint(MaeModel(_config(), seed=0))
    with pytest.raises(CheckpointError):
        decode_checkpoint(raw[:-3])
    with pytest.raises(CheckpointError):
        decode_checkpoint(raw + b'\x00')


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / 'absent.ckpt'))


def test_float64_model_keeps_its_dtype(tmp_path, rng):
    model = _trained_looking_model(rng, _config(dtype='float64'), scope=Scope.ENCODER_ONLY)
    path = str(tmp_path / 'model.ckpt')
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    for name, value in loaded.model.parameters().items():
        assert value.dtype == np.float64, name
    assert all(R.values.dtype == np.float64 for R in loaded.model.decorrelation_matrices().values())
