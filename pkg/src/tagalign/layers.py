"""Transformer building blocks assembled from the autodiff primitives."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError

MASKED = -1e9
INIT_SCALE = 0.02


class ParamDict(dict):
    """Registry of named parameter tensors."""

    def add(self, name, array):
        if name in self:
            raise InputError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self[name] = t
        return t

    def zero_grad(self):
        for p in self.values():
            p.grad = None


class Linear:
    def __init__(self, params, name, rng, d_in, d_out, scale=INIT_SCALE):
        self.w = params.add(f"{name}.w", rng.normal(0.0, scale, (d_in, d_out)))
        self.b = params.add(f"{name}.b", np.zeros(d_out))

    def __call__(self, x):
        return x @ self.w + self.b


class LayerNorm:
    def __init__(self, params, name, d):
        self.gain = params.add(f"{name}.gain", np.ones(d))
        self.bias = params.add(f"{name}.bias", np.zeros(d))

    def __call__(self, x):
        return ad.layer_norm(x, self.gain, self.bias)


def gelu(x):
    # tanh approximation; exact erf is not worth a dependency here
    c = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + ad.tanh(c * (x + 0.044715 * x * x * x)))


class MultiHeadAttention:
    """Scaled dot-product attention over (batch, seq, d) activations."""

    def __init__(self, params, name, rng, d, heads):
        if d % heads:
            raise InputError(f"hidden width {d} not divisible by {heads} heads")
        self.heads = heads
        self.d_head = d // heads
        self.q = Linear(params, f"{name}.q", rng, d, d)
        self.k = Linear(params, f"{name}.k", rng, d, d)
        self.v = Linear(params, f"{name}.v", rng, d, d)
        self.o = Linear(params, f"{name}.o", rng, d, d)

    def __call__(self, x, mask=None):
        b, s, d = x.shape

        def split(t):
            return t.reshape((b, s, self.heads, self.d_head)).transpose((0, 2, 1, 3))

        q = split(self.q(x))
        k = split(self.k(x))
        v = split(self.v(x))
        scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(self.d_head))
        if mask is not None:
            scores = scores + mask
        attn = ad.softmax(scores, axis=-1)
        ctx = (attn @ v).transpose((0, 2, 1, 3)).reshape((b, s, d))
        return self.o(ctx)


class FeedForward:
    def __init__(self, params, name, rng, d, hidden_mult=4):
        self.lin1 = Linear(params, f"{name}.lin1", rng, d, hidden_mult * d)
        self.lin2 = Linear(params, f"{name}.lin2", rng, hidden_mult * d, d)

    def __call__(self, x):
        return self.lin2(gelu(self.lin1(x)))


class TransformerBlock:
    """Pre-norm residual block: attention then feed-forward."""

    def __init__(self, params, name, rng, d, heads):
        self.ln1 = LayerNorm(params, f"{name}.ln1", d)
        self.attn = MultiHeadAttention(params, f"{name}.attn", rng, d, heads)
        self.ln2 = LayerNorm(params, f"{name}.ln2", d)
        self.ff = FeedForward(params, f"{name}.ff", rng, d)

    def __call__(self, x, mask=None):
        x = x + self.attn(self.ln1(x), mask)
        return x + self.ff(self.ln2(x))


class TransformerStack:
    """A pile of blocks with a final layer norm."""

    def __init__(self, params, name, rng, layers, d, heads):
        self.blocks = [
            TransformerBlock(params, f"{name}.block{i}", rng, d, heads)
            for i in range(layers)
        ]
        self.ln_out = LayerNorm(params, f"{name}.ln_out", d)

    def __call__(self, x, mask=None):
        for block in self.blocks:
            x = block(x, mask)
        return self.ln_out(x)


def key_padding_mask(valid):
    """Additive mask (B, 1, 1, S) hiding keys where ``valid`` is False."""
    valid = np.asarray(valid, dtype=bool)
    return np.where(valid, 0.0, MASKED)[:, None, None, :]


def prefix_causal_mask(prompt_len, text_len):
    """Additive (1, 1, P+T, P+T) mask for a soft-prompt decoder.

    Prompt positions see the whole prompt; text positions see the prompt
    plus text positions up to and including themselves.
    """
    n = prompt_len + text_len
    mask = np.full((n, n), MASKED)
    mask[:, :prompt_len] = 0.0
    for i in range(prompt_len, n):
        mask[i, prompt_len:i + 1] = 0.0
    return mask[None, None]
