# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Masked-autoencoder vision transformer, at desk scale.

An image is cut into patches, most of them are hidden, the encoder sees only
the visible ones, and a small decoder fills in a learned mask token at every
hidden position and predicts the pixels of all patches. The loss is the mean
squared error on the hidden patches.

The model knows where its decorrelation sites are (``decorr_sites``); whether
they carry an R is decided when it is built.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from core.decorr import Scope
from core.errors import ConfigError, ContractViolationError, StateError
from core.layers import (DecorrelatedLinear, EncoderBlock, Layer, LayerNorm,
                         named_gradients, named_layers, named_parameters)

DTYPES = ('float32', 'float64')


@dataclass
class MaeConfig:
    """
    Model shape. The defaults are the desk-scale model; the full-scale
    reference (ViT-Base, patch 16, 224px) is kept in config.FULL_SCALE.
    """
    image_size: int = 32
    patch_size: int = 4
    channels: int = 3
    embed_dim: int = 64
    depth: int = 3
    heads: int = 4
    decoder_embed_dim: int = 32
    decoder_depth: int = 2
    decoder_heads: int = 4
    mlp_ratio: float = 4.0
    mask_ratio: float = 0.75
    loss_on_masked_only: bool = True
    norm_pix_loss: bool = False
    dtype: str = 'float32'

    @property
    def grid_size(self):
        return self.image_size // self.patch_size

    @property
    def num_patches(self):
        return self.grid_size ** 2

    @property
    def patch_dim(self):
        return self.patch_size * self.patch_size * self.channels

    def num_masked(self):
        return masked_count(self.num_patches, self.mask_ratio)

    def validate(self):
        for name in ('image_size', 'patch_size', 'channels', 'embed_dim', 'depth', 'heads',
                     'decoder_embed_dim', 'decoder_depth', 'decoder_heads'):
            if getattr(self, name) < 1:
                raise ConfigError(f"mae.{name} must be positive, got {getattr(self, name)}")
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"mae.image_size {self.image_size} is not divisible by mae.patch_size {self.patch_size}")
        if self.embed_dim % self.heads:
            raise ConfigError(f"mae.embed_dim {self.embed_dim} is not divisible by {self.heads} heads")
        if self.decoder_embed_dim % self.decoder_heads:
            raise ConfigError(f"mae.decoder_embed_dim {self.decoder_embed_dim} is not divisible "
                              f"by {self.decoder_heads} heads")
        # Sinusoidal 2-D embeddings split the dimension four ways
        for name in ('embed_dim', 'decoder_embed_dim'):
            if getattr(self, name) % 4:
                raise ConfigError(f"mae.{name} must be divisible by 4, got {getattr(self, name)}")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ConfigError(f"mae.mask_ratio must be in [0, 1), got {self.mask_ratio}")
        if self.num_masked() >= self.num_patches:
            raise ConfigError(f"mae.mask_ratio {self.mask_ratio} leaves no visible patch "
                              f"out of {self.num_patches}")
        if self.mlp_ratio <= 0:
            raise ConfigError(f"mae.mlp_ratio must be positive, got {self.mlp_ratio}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"mae.dtype must be one of {', '.join(DTYPES)}, got '{self.dtype}'")


@dataclass
class MaskPlan:
    """Which patches of one image the encoder sees and which it has to reconstruct."""
    visible_indices: np.ndarray
    masked_indices: np.ndarray
    seed: int = field(default=0)


# --- Patches ------------------------------------------------------------------

def patchify(image, patch_size):
    """
    C x H x W -> P x (patch_size^2 * C).

    Patches in raster order, each flattened channel first, then row by row.
    """
    image = np.asarray(image)
    c, h, w = image.shape
    if h % patch_size or w % patch_size:
        raise ContractViolationError(f"image {h}x{w} is not divisible into {patch_size}px patches")
    gh, gw = h // patch_size, w // patch_size
    blocks = image.reshape(c, gh, patch_size, gw, patch_size).transpose(1, 3, 0, 2, 4)
    return blocks.reshape(gh * gw, c * patch_size * patch_size)


def unpatchify(patches, patch_size, channels, height, width):
    """Inverse of patchify."""
    gh, gw = height // patch_size, width // patch_size
    patches = np.asarray(patches)
    if patches.shape != (gh * gw, channels * patch_size * patch_size):
        raise ContractViolationError(f"patches of shape {patches.shape} do not make a "
                                     f"{channels}x{height}x{width} image")
    blocks = patches.reshape(gh, gw, channels, patch_size, patch_size).transpose(2, 0, 3, 1, 4)
    return blocks.reshape(channels, height, width)


def patchify_batch(images, patch_size):
    """B x C x H x W -> B x P x patch_dim."""
    images = np.asarray(images)
    if images.ndim != 4:
        raise ContractViolationError(f"expected a B x C x H x W batch, got shape {images.shape}")
    b, c, h, w = images.shape
    if h % patch_size or w % patch_size:
        raise ContractViolationError(f"image {h}x{w} is not divisible into {patch_size}px patches")
    gh, gw = h // patch_size, w // patch_size
    blocks = images.reshape(b, c, gh, patch_size, gw, patch_size).transpose(0, 2, 4, 1, 3, 5)
    return blocks.reshape(b, gh * gw, c * patch_size * patch_size)


# --- Masks --------------------------------------------------------------------

def masked_count(num_patches, mask_ratio):
    """round(mask_ratio * P), halves rounded up."""
    return int(math.floor(mask_ratio * num_patches + 0.5))


def make_mask(num_patches, mask_ratio, seed):
    """Hide round(mask_ratio * P) patches chosen uniformly; the same seed gives the same plan."""
    if not 0.0 <= mask_ratio < 1.0:
        raise ContractViolationError(f"mask ratio must be in [0, 1), got {mask_ratio}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(num_patches)
    n_masked = masked_count(num_patches, mask_ratio)
    masked = np.sort(order[:n_masked]).astype(np.int64)
    visible = np.sort(order[n_masked:]).astype(np.int64)
    return MaskPlan(visible_indices=visible, masked_indices=masked, seed=seed)


def make_batch_masks(batch_size, num_patches, mask_ratio, batch_seed):
    """One independent plan per image, each seeded from (batch_seed, image index)."""
    plans = []
    for i in range(batch_size):
        seed = int(np.random.SeedSequence([batch_seed, i]).generate_state(1)[0])
        plans.append(make_mask(num_patches, mask_ratio, seed))
    return plans


# --- Positional embeddings ----------------------------------------------------

def _sincos_1d(dim, positions):
    omega = 1.0 / 10000 ** (np.arange(dim // 2, dtype=np.float64) / (dim / 2.0))
    angles = np.outer(positions, omega)
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def sincos_2d(dim, grid_size):
    """Fixed 2-D sine/cosine embeddings, one row per patch in raster order."""
    rows, cols = np.meshgrid(np.arange(grid_size), np.arange(grid_size), indexing='ij')
    return np.concatenate([_sincos_1d(dim // 2, rows.reshape(-1)),
                           _sincos_1d(dim // 2, cols.reshape(-1))], axis=1)


# --- Model --------------------------------------------------------------------

class MaeModel(Layer):
    """
    Patch embedding, encoder blocks, a light decoder and the pixel head.

    Built with ``decorr`` (a DecorrConfig) every layer in its scope gets an
    identity R; built without, it is the plain BP model. The random
    initialization is the same either way, so both regimes start from
    identical weights for a given seed.
    """

    def __init__(self, config, seed=0, decorr=None):
        super().__init__()
        config.validate()
        self.config = config
        dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(seed)
        e, de = config.embed_dim, config.decoder_embed_dim

        self.patch_embed = DecorrelatedLinear(config.patch_dim, e, rng, 'encoder.patch_embed', dtype)
        self.blocks = [EncoderBlock(e, config.heads, config.mlp_ratio, rng, f'encoder.blocks.{i}', dtype)
                       for i in range(config.depth)]
        self.norm = LayerNorm(e, dtype)
        self.decoder_embed = DecorrelatedLinear(e, de, rng, 'decoder.embed', dtype)
        self.params['decoder.mask_token'] = rng.normal(0.0, 0.02, size=de).astype(dtype)
        self.decoder_blocks = [EncoderBlock(de, config.decoder_heads, config.mlp_ratio, rng,
                                            f'decoder.blocks.{i}', dtype)
                               for i in range(config.decoder_depth)]
        self.decoder_norm = LayerNorm(de, dtype)
        self.head = DecorrelatedLinear(de, config.patch_dim, rng, 'decoder.head', dtype)

        self.pos_embed = sincos_2d(e, config.grid_size).astype(dtype)
        self.decoder_pos_embed = sincos_2d(de, config.grid_size).astype(dtype)
        self._cache = None

        if decorr is not None:
            for layer in decorr_sites(self, decorr.scope, decorr.per_linear_mode):
                layer.attach_decorrelation()

    def children(self):
        yield 'encoder.patch_embed', self.patch_embed
        for i, block in enumerate(self.blocks):
            yield f'encoder.blocks.{i}', block
        yield 'encoder.norm', self.norm
        yield 'decoder.embed', self.decoder_embed
        for i, block in enumerate(self.decoder_blocks):
            yield f'decoder.blocks.{i}', block
        yield 'decoder.norm', self.decoder_norm
        yield 'decoder.head', self.head

    def parameters(self):
        """Every trainable W, b, norm parameter and the mask token, by dotted name."""
        return dict(named_parameters(self))

    def gradients(self):
        return dict(named_gradients(self))

    def decorrelation_matrices(self):
        """site_id -> R for every site that carries one."""
        return {layer.site_id: layer.decorr for layer in self.linears() if layer.decorr is not None}

    def linears(self):
        return [layer for _, layer in named_layers(self) if isinstance(layer, DecorrelatedLinear)]

    def fuse(self):
        """Fold every R into its weight. The forward function does not change."""
        for layer in self.linears():
            layer.fuse()

    def encode(self, images, plans):
        """Encoder output for the visible patches only: B x V x embed_dim."""
        p = self.config.patch_size
        patches = patchify_batch(images, p).astype(self.pos_embed.dtype, copy=False)
        if patches.shape[1:] != (self.config.num_patches, self.config.patch_dim):
            raise ContractViolationError(f"images of shape {np.shape(images)} do not match the model")
        if len(plans) != patches.shape[0]:
            raise ContractViolationError(f"{len(plans)} mask plans for {patches.shape[0]} images")
        rows = np.arange(len(plans))[:, None]
        visible = np.stack([plan.visible_indices for plan in plans])
        masked = np.stack([plan.masked_indices for plan in plans]).astype(np.int64)

        h = self.patch_embed.forward(patches[rows, visible]) + self.pos_embed[visible]
        for block in self.blocks:
            h = block.forward(h)
        self._cache = (rows, visible, masked)
        return self.norm.forward(h)

    def forward(self, images, plans):
        """Reconstruction of every patch, B x P x patch_dim."""
        encoded = self.encode(images, plans)
        rows, visible, masked = self._cache
        b = encoded.shape[0]
        decoded = self.decoder_embed.forward(encoded)

        full = np.empty((b, self.config.num_patches, self.config.decoder_embed_dim), dtype=decoded.dtype)
        full[rows, visible] = decoded
        full[rows, masked] = self.params['decoder.mask_token']
        h = full + self.decoder_pos_embed
        for block in self.decoder_blocks:
            h = block.forward(h)
        return self.head.forward(self.decoder_norm.forward(h))

    def backward(self, grad_reconstruction):
        """Fill every parameter gradient from d loss / d reconstruction."""
        if self._cache is None:
            raise StateError("model backward called before forward")
        rows, visible, masked = self._cache
        g = self.decoder_norm.backward(self.head.backward(grad_reconstruction))
        for block in reversed(self.decoder_blocks):
            g = block.backward(g)
        de = self.config.decoder_embed_dim
        self.grads['decoder.mask_token'] = g[rows, masked].reshape(-1, de).sum(axis=0)

        g = self.norm.backward(self.decoder_embed.backward(g[rows, visible]))
        for block in reversed(self.blocks):
            g = block.backward(g)
        self.patch_embed.backward(g)


def decorr_sites(model, scope, per_linear_mode=False):
    """
    The linears whose inputs are decorrelated under ``scope``, in forward order.

    Encoder: the patch embedding plus each block's sites. Decoder: each decoder
    block's sites. Depends on the configuration only, never on whether an R is
    attached yet.
    """
    encoder = [model.patch_embed]
    for block in model.blocks:
        encoder.extend(block.site_layers(per_linear_mode))
    decoder = []
    for block in model.decoder_blocks:
        decoder.extend(block.site_layers(per_linear_mode))

    if scope == Scope.ENCODER_ONLY:
        return encoder
    if scope == Scope.FULL_MODEL:
        return encoder + decoder
    if scope == Scope.DECODER_ONLY:
        return decoder
    raise ConfigError(f"unknown decorrelation scope '{scope}'")


def mae_forward(model, images, batch_seed):
    """Mask every image with its own plan and reconstruct. Returns (reconstruction, plans)."""
    cfg = model.config
    plans = make_batch_masks(len(images), cfg.num_patches, cfg.mask_ratio, batch_seed)
    return model.forward(images, plans), plans


# --- Loss ---------------------------------------------------------------------

def _normalized_target(target):
    mean = target.mean(axis=-1, keepdims=True)
    var = target.var(axis=-1, keepdims=True)
    return (target - mean) / np.sqrt(var + 1e-6)


def _loss_weights(plans, num_patches, patch_dim, loss_on_masked_only):
    """Per-entry weights making the loss a per-image mean, then a batch mean."""
    b = len(plans)
    weights = np.zeros((b, num_patches))
    for i, plan in enumerate(plans):
        if loss_on_masked_only:
            if len(plan.masked_indices) == 0:
                raise ContractViolationError("loss on masked patches requested but nothing is masked")
            weights[i, plan.masked_indices] = 1.0 / (len(plan.masked_indices) * patch_dim * b)
        else:
            weights[i, :] = 1.0 / (num_patches * patch_dim * b)
    return weights[..., None]


def _loss_terms(reconstruction, target_patches, plans, loss_on_masked_only, norm_pix_loss):
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    target = np.asarray(target_patches, dtype=np.float64)
    if reconstruction.shape != target.shape:
        raise ContractViolationError(
            f"reconstruction {reconstruction.shape} and target {target.shape} differ in shape")
    if norm_pix_loss:
        target = _normalized_target(target)
    weights = _loss_weights(plans, target.shape[1], target.shape[2], loss_on_masked_only)
    return reconstruction - target, weights


def mae_loss(reconstruction, target_patches, plans, loss_on_masked_only=True, norm_pix_loss=False):
    """Squared error averaged over the hidden patches' pixels, then over the batch."""
    diff, weights = _loss_terms(reconstruction, target_patches, plans,
                                loss_on_masked_only, norm_pix_loss)
    return float(np.sum(weights * diff * diff))


def mae_loss_grad(reconstruction, target_patches, plans, loss_on_masked_only=True, norm_pix_loss=False):
    """d mae_loss / d reconstruction, in the reconstruction's dtype."""
    diff, weights = _loss_terms(reconstruction, target_patches, plans,
                                loss_on_masked_only, norm_pix_loss)
    return (2.0 * weights * diff).astype(np.asarray(reconstruction).dtype, copy=False)
