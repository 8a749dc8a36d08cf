# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
Saving and loading models in the DBPCKPT1 format.

Layout, little-endian throughout:

    magic "DBPCKPT1" | version u8 | flags u8 (bit 0: fused) | epoch u32
    metadata length u32 | metadata (UTF-8 JSON)
    tensor count u32
    per tensor: name length u16 | name | dtype u8 | ndim u8 | dims u32 x ndim | payload

Tensor names are prefixed by what they hold: ``param/`` for W, b, norm
parameters and the mask token, ``decorr/`` for R (keyed by site id),
``adam.m/`` and ``adam.v/`` for the optimizer moments, which are float64
whatever the parameter dtype. A fused checkpoint holds no ``decorr/``
tensors; its weights already are W R.

Every tensor keeps its dtype, so an unfused save/load round trip is bit-exact.
No random generator state is stored: every random stream of a run is
derived from its seed.
"""
import dataclasses
import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.decorr import DecorrelationMatrix, fuse_weights
from core.errors import CheckpointError, CheckpointMismatchError, CheckpointVersionError
from core.mae import MaeConfig, MaeModel
from core.optim import AdamWState
from utils.file_utils import atomic_write_bytes

CHECKPOINT_MAGIC = b'DBPCKPT1'
CHECKPOINT_VERSION = 1
FLAG_FUSED = 0x01

_PREAMBLE = struct.Struct('<8sBBI')
_U32 = struct.Struct('<I')
_U16 = struct.Struct('<H')
_TENSOR_HEAD = struct.Struct('<BB')

_DTYPE_CODES = {np.dtype('float32'): 0, np.dtype('float64'): 1}
_CODE_DTYPES = {0: np.dtype('<f4'), 1: np.dtype('<f8')}


@dataclass
class Checkpoint:
    model: MaeModel
    epoch: int = 0
    fused: bool = False
    config: Optional[dict] = None
    optimizer_state: Optional[AdamWState] = None
    metadata: dict = field(default_factory=dict)


# --- Encoding -----------------------------------------------------------------

def _encode_tensor(name, array):
    array = np.asarray(array)
    code = _DTYPE_CODES.get(array.dtype)
    if code is None:
        raise CheckpointError(f"tensor '{name}' has unsupported dtype {array.dtype}")
    encoded_name = name.encode('utf-8')
    parts = [_U16.pack(len(encoded_name)), encoded_name,
             _TENSOR_HEAD.pack(code, array.ndim)]
    parts.extend(_U32.pack(dim) for dim in array.shape)
    parts.append(np.ascontiguousarray(array, dtype=_CODE_DTYPES[code]).tobytes())
    return b''.join(parts)


def _collect_tensors(model, fuse, optimizer_state):
    tensors = []
    params = model.parameters()
    if fuse:
        params = dict(params)
        for layer in model.linears():
            if layer.decorr is not None:
                params[f"{layer.site_id}.weight"] = fuse_weights(layer.weight, layer.decorr)
    for name, value in params.items():
        tensors.append((f"param/{name}", value))
    if not fuse:
        for site_id, R in model.decorrelation_matrices().items():
            tensors.append((f"decorr/{site_id}", R.values))
    if optimizer_state is not None:
        for name, m in optimizer_state.first_moment.items():
            tensors.append((f"adam.m/{name}", m))
        for name, v in optimizer_state.second_moment.items():
            tensors.append((f"adam.v/{name}", v))
    return tensors


def _optimizer_metadata(state):
    if state is None:
        return None
    return {'beta1': state.beta1, 'beta2': state.beta2, 'weight_decay': state.weight_decay,
            'eps': state.eps, 'step': state.step, 'no_decay': sorted(state.no_decay)}


def encode_checkpoint(model, fuse=False, optimizer_state=None, config=None, epoch=0, extra=None):
    """
    The checkpoint as bytes. With ``fuse`` every R is folded into its weight on
    the way out; ``model`` itself is left unfused.
    """
    metadata = {
        'mae': dataclasses.asdict(model.config),
        'config': dataclasses.asdict(config) if config is not None else None,
        'optimizer': _optimizer_metadata(optimizer_state),
    }
    if extra:
        metadata['extra'] = extra
    meta_bytes = json.dumps(metadata, sort_keys=True).encode('utf-8')
    tensors = _collect_tensors(model, fuse, optimizer_state)

    parts = [_PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, FLAG_FUSED if fuse else 0, epoch),
             _U32.pack(len(meta_bytes)), meta_bytes, _U32.pack(len(tensors))]
    parts.extend(_encode_tensor(name, value) for name, value in tensors)
    return b''.join(parts)


def save_checkpoint(model, path, fuse=False, optimizer_state=None, config=None, epoch=0, extra=None):
    atomic_write_bytes(path, encode_checkpoint(model, fuse, optimizer_state, config, epoch, extra))


# --- Decoding -----------------------------------------------------------------

class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.offset = 0

    def take(self, size):
        end = self.offset + size
        if end > len(self.raw):
            raise CheckpointError(f"checkpoint truncated at byte {self.offset} "
                                  f"(wanted {size} more, file has {len(self.raw)})")
        chunk = self.raw[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt):
        return fmt.unpack(self.take(fmt.size))


def _decode_tensor(reader):
    (name_len,) = reader.unpack(_U16)
    name = reader.take(name_len).decode('utf-8')
    code, ndim = reader.unpack(_TENSOR_HEAD)
    dtype = _CODE_DTYPES.get(code)
    if dtype is None:
        raise CheckpointError(f"tensor '{name}' has unknown dtype code {code}")
    shape = tuple(reader.unpack(_U32)[0] for _ in range(ndim))
    count = int(np.prod(shape, dtype=np.int64))
    payload = reader.take(count * dtype.itemsize)
    return name, np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder('='))


def decode_checkpoint(raw):
    """(flags, epoch, metadata, {name: array}) of a DBPCKPT1 byte string."""
    reader = _Reader(raw)
    magic, version, flags, epoch = reader.unpack(_PREAMBLE)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"not a DBPCKPT1 checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"checkpoint version {version} is not supported "
                                     f"(this build reads version {CHECKPOINT_VERSION})")
    (meta_len,) = reader.unpack(_U32)
    try:
        metadata = json.loads(reader.take(meta_len).decode('utf-8'))
    except ValueError as e:
        raise CheckpointError(f"checkpoint metadata is not valid JSON: {e}") from e
    (count,) = reader.unpack(_U32)
    tensors = {}
    for _ in range(count):
        name, array = _decode_tensor(reader)
        tensors[name] = array
    if reader.offset != len(raw):
        raise CheckpointError(f"{len(raw) - reader.offset} trailing bytes after the last tensor")
    return flags, epoch, metadata, tensors


def _restore_model(mae_meta, tensors):
    try:
        model = MaeModel(MaeConfig(**mae_meta))
    except TypeError as e:
        raise CheckpointMismatchError(f"checkpoint model settings are not understood: {e}") from e

    params = model.parameters()
    stored = {name[len('param/'):]: value for name, value in tensors.items() if name.startswith('param/')}
    missing = sorted(set(params) - set(stored))
    unexpected = sorted(set(stored) - set(params))
    if missing or unexpected:
        raise CheckpointMismatchError(f"parameter names differ from the model: "
                                      f"missing {missing[:3]}, unexpected {unexpected[:3]}")
    for name, value in stored.items():
        if value.shape != params[name].shape:
            raise CheckpointMismatchError(f"'{name}' has shape {value.shape}, "
                                          f"model expects {params[name].shape}")
        params[name][...] = value

    layers = {layer.site_id: layer for layer in model.linears()}
    for name, value in tensors.items():
        if not name.startswith('decorr/'):
            continue
        site_id = name[len('decorr/'):]
        layer = layers.get(site_id)
        if layer is None or value.shape != (layer.in_dim, layer.in_dim):
            raise CheckpointMismatchError(f"decorrelation matrix '{site_id}' does not fit the model")
        layer.decorr = DecorrelationMatrix(layer.in_dim, site_id, values=value, dtype=value.dtype)
    return model


def _restore_optimizer(meta, tensors):
    if meta is None:
        return None
    state = AdamWState(beta1=meta['beta1'], beta2=meta['beta2'], weight_decay=meta['weight_decay'],
                       eps=meta['eps'], step=meta['step'], no_decay=frozenset(meta['no_decay']))
    for name, value in tensors.items():
        if name.startswith('adam.m/'):
            state.first_moment[name[len('adam.m/'):]] = value
        elif name.startswith('adam.v/'):
            state.second_moment[name[len('adam.v/'):]] = value
    return state


def load_checkpoint(path, fuse=False, expected_config=None):
    """
    Rebuild the model stored at ``path``.

    ``fuse`` folds R into W on load. ``expected_config`` (a TrainConfig) makes
    the load fail with CheckpointMismatchError when the stored model settings
    differ from it.
    """
    try:
        with open(path, 'rb') as f:
            raw = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    flags, epoch, metadata, tensors = decode_checkpoint(raw)

    if expected_config is not None:
        expected = dataclasses.asdict(expected_config.mae)
        if metadata.get('mae') != expected:
            changed = sorted(k for k in expected if metadata.get('mae', {}).get(k) != expected[k])
            raise CheckpointMismatchError(f"checkpoint was written for different model settings "
                                          f"({', '.join('mae.' + k for k in changed)})")

    model = _restore_model(metadata['mae'], tensors)
    fused = bool(flags & FLAG_FUSED)
    if fuse and not fused:
        model.fuse()
        fused = True
    return Checkpoint(model=model, epoch=epoch, fused=fused, config=metadata.get('config'),
                      optimizer_state=_restore_optimizer(metadata.get('optimizer'), tensors),
                      metadata=metadata.get('extra') or {})
