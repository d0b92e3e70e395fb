"""Sequence layers applied along random walks.

Every layer maps a (m, T, d) tensor to the same shape given a (m, T) boolean
pad mask, and is mask-neutral: inputs at masked positions are zeroed on entry
(so their original values can never leak into real positions) and outputs at
masked positions are zeroed on exit. Attention additionally removes masked
keys with an additive -1e30 score so real queries never average over padding.

Kinds:

* ``conv``       - depthwise conv + pointwise mix + residual
* ``attention``  - multi-head self-attention + FFN with residuals
* ``s4``         - diagonal state-space layer, zero-order-hold discretization
* ``selective``  - input-dependent (gated) state-space layer that collapses to
                   ``s4`` when its projections are frozen to constants

``bidirectional=True`` wraps a kind with independent forward/backward copies
and averages the two directions.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import BadHeads, BadKernel, BadTimestep, ShapeError, Unsupported

__all__ = [
    "ConvLayer",
    "AttentionLayer",
    "S4Layer",
    "SelectiveLayer",
    "Bidirectional",
    "make_seq_layer",
    "SEQ_LAYER_KINDS",
]

SEQ_LAYER_KINDS = ("conv", "attention", "s4", "selective")


def _masked(x: Tensor, mask: np.ndarray) -> Tensor:
    keep = np.broadcast_to(mask[:, :, None], x.shape).astype(np.float64)
    return ad.mul(x, Tensor(keep))


class _ParamHolder:
    """Base: a flat name -> Tensor parameter dict."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def _add(self, name: str, tensor: Tensor) -> Tensor:
        self.params[name] = tensor
        return tensor


# =============================================================================
# Convolution
# =============================================================================

class ConvLayer(_ParamHolder):
    """x + pointwise(depthwise(x)): a residual local mixer."""

    def __init__(self, dim: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        if kernel % 2 == 0 or kernel < 1:
            raise BadKernel(f"conv kernel must be odd and positive, got {kernel}")
        self.dim = dim
        self.kernel_size = kernel
        self.kernel = self._add("kernel", ad.param_uniform(rng, (kernel, dim), fan_in=kernel))
        self.mix = self._add("mix", ad.param_uniform(rng, (dim, dim)))
        self.bias = self._add("bias", ad.param_zeros((dim,)))

    @classmethod
    def identity(cls, dim: int, kernel: int) -> "ConvLayer":
        """Delta kernel and zero mix: the layer is exactly the identity."""
        layer = cls(dim, kernel, np.random.default_rng(0))
        delta = np.zeros((kernel, dim))
        delta[kernel // 2, :] = 1.0
        layer.kernel.data = delta
        layer.mix.data = np.zeros((dim, dim))
        layer.bias.data = np.zeros((dim,))
        return layer

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        xm = _masked(x, mask)
        local = ad.conv1d_depthwise(xm, self.kernel)
        mixed = ad.add(ad.matmul(local, self.mix), self.bias)
        return _masked(ad.add(xm, mixed), mask)


# =============================================================================
# Attention
# =============================================================================

class AttentionLayer(_ParamHolder):
    """Self-attention + FFN, both residual (transformer-style)."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads != 0:
            raise BadHeads(f"width {dim} not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.head_dim = dim // heads
        for name in ("wq", "wk", "wv", "wo"):
            self._add(name, ad.param_uniform(rng, (dim, dim)))
        for name in ("bq", "bk", "bv", "bo"):
            self._add(name, ad.param_zeros((dim,)))
        ff = 2 * dim
        self._add("w1", ad.param_uniform(rng, (dim, ff)))
        self._add("b1", ad.param_zeros((ff,)))
        self._add("w2", ad.param_uniform(rng, (ff, dim)))
        self._add("b2", ad.param_zeros((dim,)))

    def _split_heads(self, t: Tensor, m: int, T: int) -> Tensor:
        t = ad.reshape(t, (m, T, self.heads, self.head_dim))
        return ad.transpose(t, (0, 2, 1, 3))

    def attend(self, x: Tensor, mask: np.ndarray) -> Tensor:
        """The attention sub-block alone: softmax(q k^T / sqrt(dh)) v, merged
        across heads through the output projection."""
        m, T, _ = x.shape
        p = self.params
        q = self._split_heads(ad.add(ad.matmul(x, p["wq"]), p["bq"]), m, T)
        k = self._split_heads(ad.add(ad.matmul(x, p["wk"]), p["bk"]), m, T)
        v = self._split_heads(ad.add(ad.matmul(x, p["wv"]), p["bv"]), m, T)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                          1.0 / np.sqrt(self.head_dim))
        key_bias = np.where(mask, 0.0, -1e30)[:, None, None, :]
        scores = ad.add(scores, Tensor(np.broadcast_to(
            key_bias, (m, self.heads, T, T)).copy()))
        weights = ad.softmax(scores, axis=-1)
        ctx = ad.matmul(weights, v)
        ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (m, T, self.dim))
        return ad.add(ad.matmul(ctx, p["wo"]), p["bo"])

    def _ffn(self, x: Tensor) -> Tensor:
        p = self.params
        hidden = ad.relu(ad.add(ad.matmul(x, p["w1"]), p["b1"]))
        return ad.add(ad.matmul(hidden, p["w2"]), p["b2"])

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        xm = _masked(x, mask)
        h = ad.add(xm, self.attend(xm, mask))
        out = ad.add(h, self._ffn(h))
        return _masked(out, mask)


# =============================================================================
# State-space layers
# =============================================================================

def _scan_time(a: Tensor, b: Tensor, m: int, T: int, d: int, n: int) -> Tensor:
    """Run the linear recurrence over (m, T, d, n) by flattening channels."""
    flat_a = ad.reshape(a, (m, T, d * n))
    flat_b = ad.reshape(b, (m, T, d * n))
    h = ad.associative_scan(flat_a, flat_b)
    return ad.reshape(h, (m, T, d, n))


class S4Layer(_ParamHolder):
    """Diagonal SSM: h_t = exp(delta*A) h_{t-1} + ZOH(delta, A, B) x_t, y = C h.

    ``A`` starts at -(1 + arange(N)) on every channel; ``delta`` is stored as
    its log, initialized log-uniformly in [1e-3, 1e-1].
    """

    def __init__(self, dim: int, state: int, rng: np.random.Generator):
        super().__init__()
        self.dim, self.state = dim, state
        a0 = -np.tile(1.0 + np.arange(state, dtype=np.float64), (dim, 1))
        self.a = self._add("a", Tensor(a0, requires_grad=True))
        log_lo, log_hi = np.log(1e-3), np.log(1e-1)
        self.log_delta = self._add(
            "log_delta", Tensor(rng.uniform(log_lo, log_hi, size=(dim,)), requires_grad=True))
        self.b = self._add("b", ad.param_uniform(rng, (dim, state), fan_in=state))
        self.c = self._add("c", ad.param_uniform(rng, (dim, state), fan_in=state))

    @classmethod
    def from_matrices(cls, a: np.ndarray, b: np.ndarray, c: np.ndarray,
                      delta: np.ndarray) -> "S4Layer":
        """Build from explicit (d, N) matrices and per-channel delta > 0."""
        a = np.asarray(a, dtype=np.float64)
        delta = np.asarray(delta, dtype=np.float64)
        if np.any(delta <= 0):
            raise BadTimestep("discretization step must be strictly positive")
        layer = cls(a.shape[0], a.shape[1], np.random.default_rng(0))
        layer.a.data = a
        layer.b.data = np.asarray(b, dtype=np.float64)
        layer.c.data = np.asarray(c, dtype=np.float64)
        layer.log_delta.data = np.log(delta)
        return layer

    def _discretize(self) -> tuple[Tensor, Tensor]:
        """Returns per-channel (a_bar, b_bar), each (d, N)."""
        delta = ad.exp(self.log_delta)                     # (d,)
        delta_col = ad.expand(ad.reshape(delta, (self.dim, 1)), (self.dim, self.state))
        z = ad.mul(delta_col, self.a)                      # delta * A
        a_bar = ad.exp(z)
        b_bar = ad.mul(ad.mul(delta_col, ad.zoh_phi(z)), self.b)
        return a_bar, b_bar

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        xm = _masked(x, mask)
        m, T, d = xm.shape
        n = self.state
        a_bar, b_bar = self._discretize()
        a_full = ad.expand(ad.reshape(a_bar, (1, 1, d, n)), (m, T, d, n))
        x_col = ad.expand(ad.reshape(xm, (m, T, d, 1)), (m, T, d, n))
        b_full = ad.mul(x_col, b_bar)                      # (m,T,d,N) suffix (d,N)
        h = _scan_time(a_full, b_full, m, T, d, n)
        y = ad.reduce_sum(ad.mul(h, self.c), axis=-1)      # C h, per channel
        return _masked(y, mask)


class SelectiveLayer(_ParamHolder):
    """Input-dependent SSM with a silu gate.

    delta_t = softplus(x W_d + b_d) per channel; B_t = x W_b + b_b and
    C_t = x W_c + b_c (shared across channels); gate z_t = silu(x W_z + b_z);
    y_t = (C_t . h_t) * z_t. Freezing the projection weights to zero (biases
    carrying the constants) makes the recurrence identical to
    :class:`S4Layer` with broadcast B/C.
    """

    def __init__(self, dim: int, state: int, rng: np.random.Generator):
        super().__init__()
        self.dim, self.state = dim, state
        a0 = -np.tile(1.0 + np.arange(state, dtype=np.float64), (dim, 1))
        self.a = self._add("a", Tensor(a0, requires_grad=True))
        self._add("w_delta", ad.param_uniform(rng, (dim, dim)))
        # softplus(b_delta) spans the same log-uniform [1e-3, 1e-1] band as S4.
        delta0 = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=(dim,)))
        self._add("b_delta", Tensor(np.log(np.expm1(delta0)), requires_grad=True))
        self._add("w_b", ad.param_uniform(rng, (dim, state)))
        self._add("b_b", ad.param_zeros((state,)))
        self._add("w_c", ad.param_uniform(rng, (dim, state)))
        self._add("b_c", ad.param_zeros((state,)))
        self._add("w_gate", ad.param_uniform(rng, (dim, dim)))
        self._add("b_gate", ad.param_zeros((dim,)))

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        xm = _masked(x, mask)
        m, T, d = xm.shape
        n = self.state
        p = self.params
        delta = ad.softplus(ad.add(ad.matmul(xm, p["w_delta"]), p["b_delta"]))  # (m,T,d)
        b_t = ad.add(ad.matmul(xm, p["w_b"]), p["b_b"])                         # (m,T,N)
        c_t = ad.add(ad.matmul(xm, p["w_c"]), p["b_c"])                         # (m,T,N)
        gate = ad.silu(ad.add(ad.matmul(xm, p["w_gate"]), p["b_gate"]))         # (m,T,d)

        delta4 = ad.expand(ad.reshape(delta, (m, T, d, 1)), (m, T, d, n))
        z = ad.mul(delta4, self.a)                 # (m,T,d,N), A broadcast as suffix
        a_bar = ad.exp(z)
        b4 = ad.expand(ad.reshape(b_t, (m, T, 1, n)), (m, T, d, n))
        x4 = ad.expand(ad.reshape(xm, (m, T, d, 1)), (m, T, d, n))
        b_bar_x = ad.mul(ad.mul(ad.mul(delta4, ad.zoh_phi(z)), b4), x4)
        h = _scan_time(a_bar, b_bar_x, m, T, d, n)
        c4 = ad.expand(ad.reshape(c_t, (m, T, 1, n)), (m, T, d, n))
        y = ad.reduce_sum(ad.mul(h, c4), axis=-1)  # (m,T,d)
        return _masked(ad.mul(y, gate), mask)


# =============================================================================
# Bidirectional wrapper
# =============================================================================

class Bidirectional(_ParamHolder):
    """Average of a forward pass and a time-reversed pass with its own copy
    of the inner layer (independent per-direction parameters)."""

    def __init__(self, forward_layer, backward_layer):
        super().__init__()
        self.forward_layer = forward_layer
        self.backward_layer = backward_layer
        for name, t in forward_layer.params.items():
            self._add(f"fwd.{name}", t)
        for name, t in backward_layer.params.items():
            self._add(f"bwd.{name}", t)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        fwd = self.forward_layer(x, mask)
        x_rev = ad.flip_axis(x, 1)
        mask_rev = mask[:, ::-1]
        bwd = ad.flip_axis(self.backward_layer(x_rev, mask_rev), 1)
        return ad.scale(ad.add(fwd, bwd), 0.5)


def make_seq_layer(kind: str, dim: int, rng: np.random.Generator,
                   kernel: int = 5, heads: int = 4, state: int = 16,
                   bidirectional: bool = False):
    """Factory over the layer kinds; bidirectional wraps two fresh copies."""

    def build():
        if kind == "conv":
            return ConvLayer(dim, kernel, rng)
        if kind == "attention":
            return AttentionLayer(dim, heads, rng)
        if kind == "s4":
            return S4Layer(dim, state, rng)
        if kind == "selective":
            return SelectiveLayer(dim, state, rng)
        raise Unsupported(f"unknown sequence layer kind {kind!r}")

    if bidirectional:
        return Bidirectional(build(), build())
    return build()
