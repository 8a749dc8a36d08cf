# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
The transformer building blocks, with their backward passes written out.

Every layer keeps what its backward pass needs from the last forward call, so
a layer instance serves one forward/backward pair at a time. Parameters and
their gradients live in ``params`` / ``grads`` dicts under local names; the
full dotted name (``encoder.blocks.0.attn.qkv.weight``) comes from walking
``children()``.

Decorrelated sites are ``DecorrelatedLinear`` layers that carry a
DecorrelationMatrix. R is a constant of the graph as far as the task loss is
concerned: gradients flow through it to earlier layers, but R itself only
changes through the decorrelation update.
"""
import math

import numpy as np
from scipy.special import erf

from core.decorr import DecorrelationMatrix, decorrelate, fuse_weights
from core.errors import ConfigError, ContractViolationError, StateError

LAYERNORM_EPS = 1e-6

_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# --- Activations --------------------------------------------------------------

def gelu_forward(x):
    """Exact GELU, x * Phi(x)."""
    return 0.5 * x * (1.0 + erf(x / _SQRT_2))


def gelu_backward(x, grad_out):
    cdf = 0.5 * (1.0 + erf(x / _SQRT_2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return grad_out * (cdf + x * pdf)


def softmax_forward(x, axis=-1):
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(y, grad_out, axis=-1):
    """Gradient through softmax given its output ``y``."""
    return y * (grad_out - np.sum(grad_out * y, axis=axis, keepdims=True))


def layernorm_forward(x, gamma, beta, eps=LAYERNORM_EPS):
    """Normalize over the last axis. Returns (out, cache)."""
    mean = np.mean(x, axis=-1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    return xhat * gamma + beta, (xhat, rstd, gamma)


def layernorm_backward(cache, grad_out):
    """Returns (grad_x, grad_gamma, grad_beta)."""
    xhat, rstd, gamma = cache
    lead = tuple(range(grad_out.ndim - 1))
    grad_gamma = np.sum(grad_out * xhat, axis=lead)
    grad_beta = np.sum(grad_out, axis=lead)
    g = grad_out * gamma
    grad_x = rstd * (g - np.mean(g, axis=-1, keepdims=True)
                     - xhat * np.mean(g * xhat, axis=-1, keepdims=True))
    return grad_x, grad_gamma, grad_beta


# --- Parameter plumbing -------------------------------------------------------

class Layer:
    """Anything holding parameters, directly or through children."""

    def __init__(self):
        self.params = {}
        self.grads = {}

    def children(self):
        return ()


def named_parameters(layer, prefix=''):
    """Yield (dotted name, array) for every parameter under ``layer``, in a fixed order."""
    for name, value in layer.params.items():
        yield prefix + name, value
    for child_name, child in layer.children():
        yield from named_parameters(child, f"{prefix}{child_name}.")


def named_gradients(layer, prefix=''):
    for name in layer.params:
        yield prefix + name, layer.grads.get(name)
    for child_name, child in layer.children():
        yield from named_gradients(child, f"{prefix}{child_name}.")


def named_layers(layer, prefix=''):
    """Yield (dotted name, layer) for ``layer`` and everything below it."""
    yield prefix.rstrip('.'), layer
    for child_name, child in layer.children():
        yield from named_layers(child, f"{prefix}{child_name}.")


def xavier_uniform(rng, out_dim, in_dim, dtype):
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim)).astype(dtype)


# --- Layers -------------------------------------------------------------------

class DecorrelatedLinear(Layer):
    """
    y = W (R x) + b, or the plain affine map when the site carries no R.

    ``cached_input`` is what the weight saw on the last forward call: z when R
    is present, x otherwise. It feeds both the weight gradient and the
    correlation estimate of the decorrelation update.
    """

    def __init__(self, in_dim, out_dim, rng, site_id, dtype=np.float32):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.site_id = site_id
        self.params['weight'] = xavier_uniform(rng, out_dim, in_dim, dtype)
        self.params['bias'] = np.zeros(out_dim, dtype=dtype)
        self.decorr = None
        self.cached_input = None

    @property
    def weight(self):
        return self.params['weight']

    @property
    def bias(self):
        return self.params['bias']

    def attach_decorrelation(self):
        """Put an identity R in front of the weight, making this a decorrelated site."""
        self.decorr = DecorrelationMatrix(self.in_dim, self.site_id, dtype=self.weight.dtype)
        return self.decorr

    def forward(self, x):
        if x.shape[-1] != self.in_dim:
            raise ContractViolationError(
                f"input has {x.shape[-1]} features, layer expects {self.in_dim}", self.site_id)
        z = decorrelate(self.decorr, x) if self.decorr is not None else x
        self.cached_input = z
        return z @ self.weight.T + self.bias

    def backward(self, grad_out):
        """
        Returns grad_x and stores grad_W = g^T z and grad_b = sum(g).

        grad_x = (g W) R: the gradient passes through the whole map W R. R gets
        nothing from here.
        """
        if self.cached_input is None:
            raise StateError(f"backward called before forward on {self.site_id}")
        if grad_out.shape[-1] != self.out_dim:
            raise ContractViolationError(
                f"gradient has {grad_out.shape[-1]} features, layer outputs {self.out_dim}",
                self.site_id)
        z = self.cached_input.reshape(-1, self.in_dim)
        g = grad_out.reshape(-1, self.out_dim)
        self.grads['weight'] = g.T @ z
        self.grads['bias'] = np.sum(g, axis=0)
        grad_z = grad_out @ self.weight
        if self.decorr is not None:
            return grad_z @ self.decorr.values
        return grad_z

    def fuse(self):
        """Fold R into the weight and drop it; the forward function is unchanged."""
        if self.decorr is not None:
            self.params['weight'] = fuse_weights(self.weight, self.decorr)
            self.decorr = None


class LayerNorm(Layer):

    def __init__(self, dim, dtype=np.float32):
        super().__init__()
        self.params['gamma'] = np.ones(dim, dtype=dtype)
        self.params['beta'] = np.zeros(dim, dtype=dtype)
        self._cache = None

    def forward(self, x):
        out, self._cache = layernorm_forward(x, self.params['gamma'], self.params['beta'])
        return out

    def backward(self, grad_out):
        if self._cache is None:
            raise StateError("layer norm backward called before forward")
        grad_x, self.grads['gamma'], self.grads['beta'] = layernorm_backward(self._cache, grad_out)
        return grad_x


class Attention(Layer):
    """
    Multi-head scaled dot-product self-attention over x of shape N x T x d.

    One shared QKV projection, so Q, K and V are decorrelated by one R over
    their common input.
    """

    def __init__(self, dim, heads, rng, site_prefix, dtype=np.float32):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"embedding dim {dim} is not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.qkv = DecorrelatedLinear(dim, 3 * dim, rng, f"{site_prefix}.qkv", dtype)
        self.proj = DecorrelatedLinear(dim, dim, rng, f"{site_prefix}.proj", dtype)
        self.last_attention = None
        self._cache = None

    def children(self):
        return (('qkv', self.qkv), ('proj', self.proj))

    def forward(self, x):
        n, t, d = x.shape
        qkv = self.qkv.forward(x).reshape(n, t, 3, self.heads, self.head_dim)
        qkv = qkv.transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ k.swapaxes(-1, -2)) * self.scale
        attn = softmax_forward(scores, axis=-1)
        heads_out = attn @ v
        merged = heads_out.transpose(0, 2, 1, 3).reshape(n, t, d)
        self.last_attention = attn
        self._cache = (q, k, v, attn)
        return self.proj.forward(merged)

    def backward(self, grad_out):
        if self._cache is None:
            raise StateError("attention backward called before forward")
        q, k, v, attn = self._cache
        n, t, d = grad_out.shape
        grad_merged = self.proj.backward(grad_out)
        grad_heads = grad_merged.reshape(n, t, self.heads, self.head_dim).transpose(0, 2, 1, 3)
        grad_attn = grad_heads @ v.swapaxes(-1, -2)
        grad_v = attn.swapaxes(-1, -2) @ grad_heads
        grad_scores = softmax_backward(attn, grad_attn, axis=-1) * self.scale
        grad_q = grad_scores @ k
        grad_k = grad_scores.swapaxes(-1, -2) @ q
        grad_qkv = np.stack((grad_q, grad_k, grad_v)).transpose(1, 3, 0, 2, 4)
        return self.qkv.backward(grad_qkv.reshape(n, t, 3 * d))


class Mlp(Layer):

    def __init__(self, dim, hidden_dim, rng, site_prefix, dtype=np.float32):
        super().__init__()
        self.fc1 = DecorrelatedLinear(dim, hidden_dim, rng, f"{site_prefix}.fc1", dtype)
        self.fc2 = DecorrelatedLinear(hidden_dim, dim, rng, f"{site_prefix}.fc2", dtype)
        self._hidden = None

    def children(self):
        return (('fc1', self.fc1), ('fc2', self.fc2))

    def forward(self, x):
        self._hidden = self.fc1.forward(x)
        return self.fc2.forward(gelu_forward(self._hidden))

    def backward(self, grad_out):
        if self._hidden is None:
            raise StateError("MLP backward called before forward")
        grad_act = self.fc2.backward(grad_out)
        return self.fc1.backward(gelu_backward(self._hidden, grad_act))


class EncoderBlock(Layer):
    """
    Pre-norm transformer block: x + attn(norm1(x)), then + mlp(norm2(.)).

    Decorrelation sits after each norm, right in front of the linear it
    serves: QKV and the first MLP linear by default, plus the attention output
    projection and the second MLP linear in per-linear mode.
    """

    def __init__(self, dim, heads, mlp_ratio, rng, site_prefix, dtype=np.float32):
        super().__init__()
        self.norm1 = LayerNorm(dim, dtype)
        self.attn = Attention(dim, heads, rng, f"{site_prefix}.attn", dtype)
        self.norm2 = LayerNorm(dim, dtype)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng, f"{site_prefix}.mlp", dtype)

    def children(self):
        return (('norm1', self.norm1), ('attn', self.attn),
                ('norm2', self.norm2), ('mlp', self.mlp))

    def site_layers(self, per_linear_mode=False):
        """The linears whose inputs are decorrelated, in forward order."""
        if per_linear_mode:
            return [self.attn.qkv, self.attn.proj, self.mlp.fc1, self.mlp.fc2]
        return [self.attn.qkv, self.mlp.fc1]

    def forward(self, x):
        h = x + self.attn.forward(self.norm1.forward(x))
        return h + self.mlp.forward(self.norm2.forward(h))

    def backward(self, grad_out):
        grad_h = grad_out + self.norm2.backward(self.mlp.backward(grad_out))
        return grad_h + self.norm1.backward(self.attn.backward(grad_h))
