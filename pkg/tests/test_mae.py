# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.decorr import DecorrConfig, Scope
from core.errors import ConfigError, ContractViolationError, StateError
from core.mae import (MaeConfig, MaeModel, MaskPlan, decorr_sites, mae_forward, mae_loss,
                      mae_loss_grad, make_batch_masks, make_mask, masked_count, patchify,
                      patchify_batch, sincos_2d, unpatchify)
from tests.gradcheck import numerical_gradient, relative_error


def _small_config(**changes):
    values = dict(image_size=16, patch_size=4, channels=3, embed_dim=16, depth=2, heads=2,
                  decoder_embed_dim=8, decoder_depth=1, decoder_heads=2, mlp_ratio=2.0,
                  mask_ratio=0.75, dtype='float64')
    values.update(changes)
    return MaeConfig(**values)


# --- Patches ------------------------------------------------------------------

def test_patchify_raster_order():
    image = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    patches = patchify(image, 2)
    np.testing.assert_array_equal(patches, [[0, 1, 4, 5], [2, 3, 6, 7],
                                            [8, 9, 12, 13], [10, 11, 14, 15]])


def test_patchify_channel_major_within_a_patch():
    image = np.stack([np.zeros((2, 2)), np.ones((2, 2))])
    np.testing.assert_array_equal(patchify(image, 2), [[0, 0, 0, 0, 1, 1, 1, 1]])


def test_patchify_shape():
    assert patchify(np.zeros((3, 32, 32)), 4).shape == (64, 48)


def test_patchify_rejects_indivisible_image():
    with pytest.raises(ContractViolationError):
        patchify(np.zeros((1, 10, 10)), 4)


def test_unpatchify_inverts_patchify(rng):
    image = rng.normal(size=(3, 12, 12))
    np.testing.assert_array_equal(unpatchify(patchify(image, 4), 4, 3, 12, 12), image)


def test_batch_patchify_matches_single(rng):
    images = rng.normal(size=(3, 2, 8, 8))
    batch = patchify_batch(images, 4)
    for i in range(3):
        np.testing.assert_array_equal(batch[i], patchify(images[i], 4))


# --- Masks --------------------------------------------------------------------

@pytest.mark.parametrize('num_patches', [4, 16, 64, 196])
@pytest.mark.parametrize('ratio', [0.25, 0.5, 0.75])
def test_mask_partitions_patches(num_patches, ratio):
    plan = make_mask(num_patches, ratio, seed=11)
    assert len(plan.masked_indices) == round(ratio * num_patches)
    everything = np.concatenate([plan.visible_indices, plan.masked_indices])
    np.testing.assert_array_equal(np.sort(everything), np.arange(num_patches))
    assert np.all(np.diff(plan.visible_indices) > 0)
    assert np.all(np.diff(plan.masked_indices) > 0)


def test_masked_count_rounds_halves_up():
    assert masked_count(196, 0.75) == 147
    assert masked_count(2, 0.25) == 1
    assert masked_count(10, 0.0) == 0


def test_mask_is_deterministic_per_seed():
    a = make_mask(64, 0.75, seed=5)
    b = make_mask(64, 0.75, seed=5)
    np.testing.assert_array_equal(a.masked_indices, b.masked_indices)


def test_masks_differ_across_seeds():
    plans = [make_mask(196, 0.75, seed=s).masked_indices for s in range(5)]
    assert len({tuple(p) for p in plans}) == 5


def test_zero_ratio_hides_nothing():
    plan = make_mask(16, 0.0, seed=0)
    assert len(plan.masked_indices) == 0
    assert len(plan.visible_indices) == 16


def test_mask_rejects_full_ratio():
    with pytest.raises(ContractViolationError):
        make_mask(16, 1.0, seed=0)


def test_batch_masks_are_independent_and_reproducible():
    first = make_batch_masks(4, 64, 0.75, batch_seed=3)
    again = make_batch_masks(4, 64, 0.75, batch_seed=3)
    for a, b in zip(first, again):
        np.testing.assert_array_equal(a.masked_indices, b.masked_indices)
    assert len({tuple(p.masked_indices) for p in first}) == 4


@settings(max_examples=30, deadline=None)
@given(grid=st.integers(1, 14), ratio=st.sampled_from([0.0, 0.25, 0.5, 0.75, 0.9]),
       seed=st.integers(0, 2 ** 31))
def test_mask_cardinality_property(grid, ratio, seed):
    num_patches = grid * grid
    plan = make_mask(num_patches, ratio, seed)
    assert len(plan.masked_indices) + len(plan.visible_indices) == num_patches
    assert not set(plan.masked_indices) & set(plan.visible_indices)


# --- Positional embeddings ----------------------------------------------------

def test_sincos_shape_and_origin():
    table = sincos_2d(16, 4)
    assert table.shape == (16, 16)
    # Position (0, 0): every sine is 0, every cosine is 1
    np.testing.assert_allclose(table[0], np.tile(np.repeat([0.0, 1.0], 4), 2))
    assert np.all(np.abs(table) <= 1.0)


# --- Configuration ------------------------------------------------------------

@pytest.mark.parametrize('changes', [{'image_size': 18}, {'embed_dim': 18, 'heads': 4},
                                     {'mask_ratio': 1.0}, {'mask_ratio': -0.1},
                                     {'embed_dim': 6, 'heads': 2}, {'dtype': 'float16'},
                                     {'depth': 0}])
def test_config_rejects(changes):
    with pytest.raises(ConfigError):
        _small_config(**changes).validate()


def test_desk_defaults():
    cfg = MaeConfig()
    assert cfg.num_patches == 64
    assert cfg.patch_dim == 48
    assert cfg.num_masked() == 48


# --- Model --------------------------------------------------------------------

def test_site_counts():
    model = MaeModel(MaeConfig(), seed=0)
    assert len(decorr_sites(model, Scope.ENCODER_ONLY)) == 7
    assert len(decorr_sites(model, Scope.DECODER_ONLY)) == 4
    assert len(decorr_sites(model, Scope.FULL_MODEL)) == 11
    assert len(decorr_sites(model, Scope.ENCODER_ONLY, per_linear_mode=True)) == 13


def test_site_ids_are_in_forward_order():
    model = MaeModel(MaeConfig(depth=1), seed=0)
    assert [s.site_id for s in decorr_sites(model, Scope.ENCODER_ONLY)] == [
        'encoder.patch_embed', 'encoder.blocks.0.attn.qkv', 'encoder.blocks.0.mlp.fc1']


def test_unknown_scope():
    with pytest.raises(ConfigError):
        decorr_sites(MaeModel(MaeConfig(depth=1), seed=0), 'everything')


def test_decorrelated_model_carries_identity_matrices():
    model = MaeModel(MaeConfig(), seed=0, decorr=DecorrConfig())
    matrices = model.decorrelation_matrices()
    assert len(matrices) == 7
    assert all(R.is_identity() for R in matrices.values())
    assert matrices['encoder.patch_embed'].dim == 48
    assert not MaeModel(MaeConfig(), seed=0).decorrelation_matrices()


def test_same_seed_same_weights_with_or_without_decorrelation():
    plain = MaeModel(_small_config(), seed=3).parameters()
    decorrelated = MaeModel(_small_config(), seed=3, decorr=DecorrConfig()).parameters()
    assert list(plain) == list(decorrelated)
    for name in plain:
        np.testing.assert_array_equal(plain[name], decorrelated[name])


def test_parameter_names():
    names = MaeModel(_small_config(depth=1), seed=0).parameters()
    assert 'encoder.blocks.0.attn.qkv.weight' in names
    assert 'decoder.mask_token' in names
    assert 'decoder.head.bias' in names


def test_reconstruction_shape(rng):
    cfg = _small_config()
    model = MaeModel(cfg, seed=0)
    recon, plans = mae_forward(model, rng.normal(size=(2, 3, 16, 16)), batch_seed=0)
    assert recon.shape == (2, 16, 48)
    assert len(plans) == 2


def test_model_keeps_float32_by_default(rng):
    cfg = _small_config(dtype='float32')
    model = MaeModel(cfg, seed=0)
    recon, _ = mae_forward(model, rng.normal(size=(2, 3, 16, 16)).astype(np.float32), batch_seed=0)
    assert recon.dtype == np.float32


def test_mismatched_plans(rng):
    model = MaeModel(_small_config(), seed=0)
    with pytest.raises(ContractViolationError):
        model.forward(rng.normal(size=(2, 3, 16, 16)), make_batch_masks(3, 16, 0.75, 0))


def test_backward_before_forward():
    model = MaeModel(_small_config(), seed=0)
    with pytest.raises(StateError):
        model.backward(np.zeros((1, 16, 48)))


def test_encoder_never_sees_masked_pixels(rng):
    cfg = _small_config()
    model = MaeModel(cfg, seed=0)
    images = rng.normal(size=(2, 3, 16, 16))
    plans = make_batch_masks(2, cfg.num_patches, cfg.mask_ratio, batch_seed=9)
    before = model.encode(images, plans)

    altered = images.copy()
    p, grid = cfg.patch_size, cfg.grid_size
    for i, plan in enumerate(plans):
        for index in plan.masked_indices:
            r, c = divmod(int(index), grid)
            altered[i, :, r * p:(r + 1) * p, c * p:(c + 1) * p] = 99.0
    np.testing.assert_array_equal(model.encode(altered, plans), before)


def test_fused_model_reconstructs_the_same(rng):
    cfg = _small_config()
    model = MaeModel(cfg, seed=0, decorr=DecorrConfig(scope=Scope.FULL_MODEL))
    for R in model.decorrelation_matrices().values():
        R.values[...] += 0.05 * rng.normal(size=R.values.shape)
    images = rng.normal(size=(2, 3, 16, 16))
    plans = make_batch_masks(2, cfg.num_patches, cfg.mask_ratio, batch_seed=1)
    before = model.forward(images, plans)
    model.fuse()
    assert not model.decorrelation_matrices()
    after = model.forward(images, plans)
    assert np.max(np.abs(after - before)) <= 1e-5 * max(1.0, np.max(np.abs(before)))


# --- Loss ---------------------------------------------------------------------

def _plans(num_patches, masked):
    masked = np.array(masked, dtype=np.int64)
    visible = np.setdiff1d(np.arange(num_patches), masked)
    return [MaskPlan(visible_indices=visible, masked_indices=masked)]


def test_perfect_reconstruction_has_zero_loss(rng):
    target = rng.normal(size=(1, 4, 3))
    assert mae_loss(target, target, _plans(4, [1, 2])) == 0.0


def test_constant_error_of_two_gives_four(rng):
    target = rng.normal(size=(1, 4, 3))
    assert mae_loss(target + 2.0, target, _plans(4, [0, 3])) == pytest.approx(4.0)
    assert mae_loss(target + 2.0, target, _plans(4, [0, 3]),
                    loss_on_masked_only=False) == pytest.approx(4.0)


def test_loss_ignores_visible_patches(rng):
    target = rng.normal(size=(1, 4, 3))
    recon = rng.normal(size=(1, 4, 3))
    plans = _plans(4, [1, 2])
    perturbed = recon.copy()
    perturbed[0, [0, 3]] += 100.0
    assert mae_loss(perturbed, target, plans) == mae_loss(recon, target, plans)
    grad = mae_loss_grad(recon, target, plans)
    assert not grad[0, [0, 3]].any()


def test_loss_is_a_per_image_mean():
    target = np.zeros((2, 4, 1))
    recon = np.zeros((2, 4, 1))
    recon[0] = 1.0
    plans = _plans(4, [0, 1]) + _plans(4, [2, 3])
    assert mae_loss(recon, target, plans) == pytest.approx(0.5)


def test_loss_gradient_matches_finite_differences(rng):
    target = rng.normal(size=(2, 4, 3))
    recon = rng.normal(size=(2, 4, 3))
    plans = _plans(4, [1, 3]) + _plans(4, [0, 2])
    for norm_pix in (False, True):
        numeric = numerical_gradient(lambda: mae_loss(recon, target, plans, norm_pix_loss=norm_pix), recon)
        assert relative_error(mae_loss_grad(recon, target, plans, norm_pix_loss=norm_pix), numeric) < 1e-6


def test_loss_shape_mismatch():
    with pytest.raises(ContractViolationError):
        mae_loss(np.zeros((1, 4, 3)), np.zeros((1, 4, 2)), _plans(4, [0]))


def test_model_gradients_match_finite_differences(tiny_mae, rng):
    model = MaeModel(tiny_mae, seed=0, decorr=DecorrConfig(scope=Scope.FULL_MODEL, per_linear_mode=True))
    for R in model.decorrelation_matrices().values():
        R.values[...] += 0.1 * rng.normal(size=R.values.shape)
    images = rng.normal(size=(2, 1, 8, 8))
    plans = make_batch_masks(2, tiny_mae.num_patches, tiny_mae.mask_ratio, batch_seed=4)
    target = patchify_batch(images, tiny_mae.patch_size)

    def loss():
        return mae_loss(model.forward(images, plans), target, plans)

    recon = model.forward(images, plans)
    model.backward(mae_loss_grad(recon, target, plans))
    grads = model.gradients()
    params = model.parameters()

    names = sorted(params)
    analytic, numeric = [], []
    for name in rng.choice(names, size=20):
        index = int(rng.integers(params[name].size))
        analytic.append(grads[name].reshape(-1)[index])
        numeric.append(numerical_gradient(loss, params[name], indices=[index]).reshape(-1)[index])
    assert relative_error(np.array(analytic), np.array(numeric)) < 1e-3
