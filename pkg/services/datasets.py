# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Images to pre-train on: synthetic generation, the DBPTNSR1 file format, the
train/validation split and the pre-training augmentations.

A dataset is a float array of shape count x C x H x W. Synthetic images are
white noise blurred with a Gaussian, so neighbouring pixels - and therefore the
entries of a patch - are correlated, which is the regime decorrelation is for.
"""
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from core.errors import (BadMagicError, ConfigError, DtypeMismatchError,
                         LengthMismatchError)
from utils.file_utils import atomic_write_bytes

DATASET_MAGIC = b'DBPTNSR1'
# magic, count, channels, height, width, dtype code
HEADER = struct.Struct('<8sIIIIB')
DTYPE_CODES = {0: np.dtype('<f4'), 1: np.dtype('<f8')}
INTERPOLATION_ORDERS = {'bilinear': 1, 'spline': 3}


@dataclass
class SyntheticSpec:
    count: int = 4096
    channels: int = 3
    size: int = 32
    correlation_length: float = 2.0
    seed: int = 0


@dataclass
class AugmentConfig:
    random_crop: bool = True
    crop_scale: tuple = (0.2, 1.0)
    flip_prob: float = 0.5
    interpolation: str = 'bilinear'

    def validate(self):
        lo, hi = self.crop_scale
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"crop scale range must satisfy 0 < min <= max <= 1, got {self.crop_scale}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigError(f"flip probability must be in [0, 1], got {self.flip_prob}")
        if self.interpolation not in INTERPOLATION_ORDERS:
            raise ConfigError(f"interpolation must be one of {', '.join(INTERPOLATION_ORDERS)}, "
                              f"got '{self.interpolation}'")


# --- Generation ---------------------------------------------------------------

def generate_synthetic(spec):
    """
    Gaussian noise blurred per channel with sigma = correlation_length, then
    standardized per image. The same spec always yields the same array.
    """
    if spec.correlation_length < 0:
        raise ConfigError(f"correlation length must not be negative, got {spec.correlation_length}")
    rng = np.random.default_rng(spec.seed)
    images = rng.standard_normal((spec.count, spec.channels, spec.size, spec.size))
    if spec.correlation_length > 0:
        sigma = (0, 0, spec.correlation_length, spec.correlation_length)
        images = gaussian_filter(images, sigma=sigma, mode='wrap')
    mean = images.mean(axis=(1, 2, 3), keepdims=True)
    std = images.std(axis=(1, 2, 3), keepdims=True)
    return ((images - mean) / std).astype(np.float32)


# --- DBPTNSR1 files -----------------------------------------------------------

def encode_dataset(data):
    data = np.asarray(data)
    if data.ndim != 4:
        raise ConfigError(f"a dataset is count x C x H x W, got shape {data.shape}")
    code = 1 if data.dtype == np.float64 else 0
    count, channels, height, width = data.shape
    header = HEADER.pack(DATASET_MAGIC, count, channels, height, width, code)
    return header + np.ascontiguousarray(data, dtype=DTYPE_CODES[code]).tobytes()


def decode_dataset(raw, expected_dtype=None):
    """
    Parse a DBPTNSR1 byte string. Nothing is returned unless the whole file
    checks out.
    """
    if len(raw) < HEADER.size:
        raise LengthMismatchError(f"file holds {len(raw)} bytes, shorter than the {HEADER.size}-byte header")
    magic, count, channels, height, width, code = HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise BadMagicError(f"not a DBPTNSR1 file (magic {magic!r})")
    if code not in DTYPE_CODES:
        raise DtypeMismatchError(f"unknown dtype code {code}")
    dtype = DTYPE_CODES[code]
    if expected_dtype is not None and np.dtype(expected_dtype) != dtype:
        raise DtypeMismatchError(f"file stores {dtype}, expected {np.dtype(expected_dtype)}")
    expected = count * channels * height * width * dtype.itemsize
    payload = len(raw) - HEADER.size
    if payload != expected:
        raise LengthMismatchError(
            f"header promises {count} images ({expected} bytes), payload holds {payload} bytes")
    data = np.frombuffer(raw, dtype=dtype, offset=HEADER.size)
    return data.reshape(count, channels, height, width).astype(dtype.newbyteorder('='))


def save_dataset(path, data):
    atomic_write_bytes(path, encode_dataset(data))


def load_dataset(path, expected_dtype=None):
    with open(path, 'rb') as f:
        return decode_dataset(f.read(), expected_dtype)


# --- Split and normalization --------------------------------------------------

def split_dataset(data, val_fraction=0.10):
    """(train, validation): the validation split is a fixed tail of the dataset."""
    n = len(data)
    n_val = min(n - 1, max(1, math.ceil(round(val_fraction * n, 9))))
    return data[:n - n_val], data[n - n_val:]


def channel_stats(data):
    """Dataset-level per-channel mean and standard deviation."""
    data = np.asarray(data, dtype=np.float64)
    mean = data.mean(axis=(0, 2, 3))
    std = data.std(axis=(0, 2, 3))
    return mean, np.where(std > 0, std, 1.0)


def normalize(images, mean, std):
    """(x - mean) / std per channel, for one image (C x H x W) or a batch."""
    shape = (-1, 1, 1)
    return ((images - np.reshape(mean, shape)) / np.reshape(std, shape)).astype(images.dtype, copy=False)


# --- Augmentation -------------------------------------------------------------

def hflip(image):
    return image[..., ::-1].copy()


def resize(image, size, interpolation='bilinear'):
    """Resize C x h x w to C x size x size with pixel centres aligned."""
    c, h, w = image.shape
    if h == size and w == size:
        return image.copy()
    ys = (np.arange(size) + 0.5) * (h / size) - 0.5
    xs = (np.arange(size) + 0.5) * (w / size) - 0.5
    grid = np.stack(np.meshgrid(ys, xs, indexing='ij'))
    order = INTERPOLATION_ORDERS[interpolation]
    out = np.empty((c, size, size), dtype=image.dtype)
    for ch in range(c):
        out[ch] = map_coordinates(image[ch], grid, order=order, mode='nearest')
    return out


def random_resized_crop(image, rng, scale=(0.2, 1.0), interpolation='bilinear'):
    """A square crop covering a uniform [min, max] share of the area, resized back."""
    _, h, w = image.shape
    area = rng.uniform(scale[0], scale[1])
    side = int(min(h, w, max(1, round(math.sqrt(area * h * w)))))
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    return resize(image[:, top:top + side, left:left + side], h, interpolation)


def augment(image, rng, config, mean, std):
    """Random crop (optional), horizontal flip, then dataset-level normalization."""
    if config.random_crop:
        image = random_resized_crop(image, rng, config.crop_scale, config.interpolation)
    if rng.random() < config.flip_prob:
        image = hflip(image)
    return normalize(image, mean, std)


def augment_batch(images, rng, config, mean, std):
    return np.stack([augment(image, rng, config, mean, std) for image in images])
