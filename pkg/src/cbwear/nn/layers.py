"""Layer catalog: 1D convolutional, recurrent, and attention building blocks.

Every layer implements the exact adjoint of its forward map; all of them are
covered by central-finite-difference checks in the test suite.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import PatchLengthIndivisible, ShapeMismatch
from .core import Buffer, Layer, Parameter, Sequential, TRAIN


def conv_out_len(length: int, kernel: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def orthogonal(rng, n, dtype):
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q.astype(dtype)


class Linear(Layer):
    def __init__(self, in_dim, out_dim, rng, dtype=np.float32, group="head", name="linear"):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.W = Parameter(kaiming_uniform(rng, (in_dim, out_dim), in_dim, dtype),
                           name=f"{name}.W", group=group)
        self.b = Parameter(np.zeros(out_dim, dtype=dtype), name=f"{name}.b", group=group)

    def params(self):
        return [self.W, self.b]

    def forward(self, x, mode=TRAIN, rng=None):
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatch(self.W.name, f"(..., {self.in_dim})", x.shape)
        y = x @ self.W.value + self.b.value
        return y, x

    def backward(self, x, dy):
        x2 = x.reshape(-1, self.in_dim)
        dy2 = dy.reshape(-1, self.out_dim)
        self.W.grad += x2.T @ dy2
        self.b.grad += dy2.sum(axis=0)
        return (dy2 @ self.W.value.T).reshape(x.shape)


class ReLU(Layer):
    def forward(self, x, mode=TRAIN, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, mask, dy):
        return dy * mask


class Dropout(Layer):
    def __init__(self, p=0.0):
        self.p = float(p)

    def forward(self, x, mode=TRAIN, rng=None):
        if mode != TRAIN or self.p <= 0.0:
            return x, None
        if rng is None:
            raise ValueError("Dropout in train mode needs an rng")
        keep = (rng.random(x.shape) >= self.p).astype(x.dtype)
        scale = x.dtype.type(1.0 / (1.0 - self.p))
        return x * keep * scale, keep * scale

    def backward(self, cache, dy):
        if cache is None:
            return dy
        return dy * cache


class Conv1D(Layer):
    """Cross-correlation over the time axis; weight (kernel, in_ch, out_ch).

    Setting `capture` keeps the latest output activation and its incoming
    gradient around (used for class activation maps).
    """

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, rng=None,
                 dtype=np.float32, group="head", name="conv"):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.W = Parameter(kaiming_uniform(rng, (kernel, in_ch, out_ch), kernel * in_ch, dtype),
                           name=f"{name}.W", group=group)
        self.b = Parameter(np.zeros(out_ch, dtype=dtype), name=f"{name}.b", group=group)
        self.capture = False
        self.captured_output = None
        self.captured_grad = None

    def params(self):
        return [self.W, self.b]

    def forward(self, x, mode=TRAIN, rng=None):
        if x.ndim != 3 or x.shape[2] != self.in_ch:
            raise ShapeMismatch(self.W.name, f"(B, L, {self.in_ch})", x.shape)
        B, L, C = x.shape
        if self.padding:
            x = np.pad(x, ((0, 0), (self.padding, self.padding), (0, 0)))
        Lp = x.shape[1]
        if Lp < self.kernel:
            raise ShapeMismatch(self.W.name, f"padded length >= {self.kernel}", x.shape)
        # (B, Lp-K+1, C, K) -> stride -> (B, Lout, K, C)
        cols = sliding_window_view(x, self.kernel, axis=1)[:, ::self.stride]
        cols = np.ascontiguousarray(cols.transpose(0, 1, 3, 2))
        Lout = cols.shape[1]
        y = cols.reshape(B * Lout, -1) @ self.W.value.reshape(-1, self.out_ch)
        y = y.reshape(B, Lout, self.out_ch) + self.b.value
        if self.capture:
            self.captured_output = y
        return y, (cols, (B, L))

    def backward(self, cache, dy):
        cols, (B, L) = cache
        if self.capture:
            self.captured_grad = dy
        Lout = cols.shape[1]
        dy2 = dy.reshape(B * Lout, self.out_ch)
        self.W.grad += (cols.reshape(B * Lout, -1).T @ dy2).reshape(self.W.shape)
        self.b.grad += dy2.sum(axis=0)
        dcols = (dy2 @ self.W.value.reshape(-1, self.out_ch).T).reshape(B, Lout, self.kernel, self.in_ch)
        dxp = np.zeros((B, L + 2 * self.padding, self.in_ch), dtype=dy.dtype)
        for k in range(self.kernel):
            dxp[:, k:k + self.stride * Lout:self.stride] += dcols[:, :, k]
        if self.padding:
            return dxp[:, self.padding:self.padding + L]
        return dxp


class TransposedConv1D(Layer):
    """Adjoint of a stride-s conv: output length (L-1)*stride + kernel."""

    def __init__(self, in_ch, out_ch, kernel, stride, rng=None, dtype=np.float32,
                 group="head", name="tconv"):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride = kernel, stride
        self.W = Parameter(kaiming_uniform(rng, (kernel, in_ch, out_ch), kernel * in_ch, dtype),
                           name=f"{name}.W", group=group)
        self.b = Parameter(np.zeros(out_ch, dtype=dtype), name=f"{name}.b", group=group)

    def params(self):
        return [self.W, self.b]

    def forward(self, x, mode=TRAIN, rng=None):
        if x.ndim != 3 or x.shape[2] != self.in_ch:
            raise ShapeMismatch(self.W.name, f"(B, L, {self.in_ch})", x.shape)
        B, L, _ = x.shape
        Lout = (L - 1) * self.stride + self.kernel
        contrib = np.tensordot(x, self.W.value, axes=([2], [1]))  # (B, L, K, out)
        y = np.zeros((B, Lout, self.out_ch), dtype=x.dtype)
        for k in range(self.kernel):
            y[:, k:k + self.stride * L:self.stride] += contrib[:, :, k]
        return y + self.b.value, x

    def backward(self, x, dy):
        B, L, _ = x.shape
        dcontrib = np.empty((B, L, self.kernel, self.out_ch), dtype=dy.dtype)
        for k in range(self.kernel):
            dcontrib[:, :, k] = dy[:, k:k + self.stride * L:self.stride]
        self.W.grad += np.einsum("blc,blko->kco", x, dcontrib)
        self.b.grad += dy.sum(axis=(0, 1))
        return np.tensordot(dcontrib, self.W.value, axes=([2, 3], [0, 2]))


class MaxPool1D(Layer):
    def __init__(self, kernel=2, stride=2):
        self.kernel, self.stride = kernel, stride

    def forward(self, x, mode=TRAIN, rng=None):
        B, L, C = x.shape
        if L < self.kernel:
            raise ShapeMismatch("maxpool", f"length >= {self.kernel}", x.shape)
        win = sliding_window_view(x, self.kernel, axis=1)[:, ::self.stride]  # (B, Lout, C, K)
        arg = win.argmax(axis=3)
        y = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
        return np.ascontiguousarray(y), (arg, x.shape)

    def backward(self, cache, dy):
        arg, shape = cache
        B, L, C = shape
        Lout = arg.shape[1]
        dx = np.zeros(shape, dtype=dy.dtype)
        base = np.arange(Lout) * self.stride
        idx = base[None, :, None] + arg  # time index of each max
        bi = np.arange(B)[:, None, None]
        ci = np.arange(C)[None, None, :]
        np.add.at(dx, (bi, idx, ci), dy)
        return dx


class GlobalAvgPool(Layer):
    """Mean over the time axis: (B, T, C) -> (B, C)."""

    def forward(self, x, mode=TRAIN, rng=None):
        return x.mean(axis=1), x.shape

    def backward(self, shape, dy):
        B, T, C = shape
        return np.broadcast_to(dy[:, None, :] / dy.dtype.type(T), shape).copy()


class Crop1D(Layer):
    """Trim a sequence to the first target_len steps."""

    def __init__(self, target_len):
        self.target_len = target_len

    def forward(self, x, mode=TRAIN, rng=None):
        return x[:, :self.target_len], x.shape

    def backward(self, shape, dy):
        dx = np.zeros(shape, dtype=dy.dtype)
        dx[:, :self.target_len] = dy
        return dx


class Resample1D(Layer):
    """Nearest-neighbor resampling along time to a fixed output grid."""

    def __init__(self, out_len):
        self.out_len = out_len

    def forward(self, x, mode=TRAIN, rng=None):
        B, L, C = x.shape
        idx = np.minimum(((np.arange(self.out_len) + 0.5) * L / self.out_len).astype(np.int64), L - 1)
        return x[:, idx], (idx, x.shape)

    def backward(self, cache, dy):
        idx, shape = cache
        dx = np.zeros(shape, dtype=dy.dtype)
        np.add.at(dx, (slice(None), idx), dy)
        return dx


class BatchNorm1D(Layer):
    """Per-channel batch normalization over (batch, time)."""

    def __init__(self, ch, eps=1e-5, momentum=0.1, dtype=np.float32, group="head", name="bn"):
        self.ch, self.eps, self.momentum = ch, eps, momentum
        self.gamma = Parameter(np.ones(ch, dtype=dtype), name=f"{name}.gamma", group=group)
        self.beta = Parameter(np.zeros(ch, dtype=dtype), name=f"{name}.beta", group=group)
        self.running_mean = Buffer(np.zeros(ch, dtype=dtype), name=f"{name}.running_mean")
        self.running_var = Buffer(np.ones(ch, dtype=dtype), name=f"{name}.running_var")

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def forward(self, x, mode=TRAIN, rng=None):
        if x.shape[-1] != self.ch:
            raise ShapeMismatch(self.gamma.name, f"(..., {self.ch})", x.shape)
        if mode == TRAIN:
            mu = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            m = x.dtype.type(self.momentum)
            self.running_mean.value[...] = (1 - m) * self.running_mean.value + m * mu
            self.running_var.value[...] = (1 - m) * self.running_var.value + m * var
        else:
            mu = self.running_mean.value
            var = self.running_var.value
        ivar = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * ivar
        y = xhat * self.gamma.value + self.beta.value
        return y, (xhat, ivar, mode, x.shape)

    def backward(self, cache, dy):
        xhat, ivar, mode, shape = cache
        self.gamma.grad += (dy * xhat).sum(axis=(0, 1))
        self.beta.grad += dy.sum(axis=(0, 1))
        dxhat = dy * self.gamma.value
        if mode != TRAIN:
            return dxhat * ivar
        N = shape[0] * shape[1]
        return (ivar / N) * (N * dxhat - dxhat.sum(axis=(0, 1))
                             - xhat * (dxhat * xhat).sum(axis=(0, 1)))


class LayerNorm(Layer):
    def __init__(self, dim, eps=1e-5, dtype=np.float32, group="head", name="ln"):
        self.dim, self.eps = dim, eps
        self.gamma = Parameter(np.ones(dim, dtype=dtype), name=f"{name}.gamma", group=group)
        self.beta = Parameter(np.zeros(dim, dtype=dtype), name=f"{name}.beta", group=group)

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, mode=TRAIN, rng=None):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        ivar = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * ivar
        return xhat * self.gamma.value + self.beta.value, (xhat, ivar)

    def backward(self, cache, dy):
        xhat, ivar = cache
        red = tuple(range(dy.ndim - 1))
        self.gamma.grad += (dy * xhat).sum(axis=red)
        self.beta.grad += dy.sum(axis=red)
        dxhat = dy * self.gamma.value
        D = self.dim
        return (ivar / D) * (D * dxhat - dxhat.sum(axis=-1, keepdims=True)
                             - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))


class LSTM(Layer):
    """Single-layer LSTM, batch-first; returns the full hidden sequence.

    Gate order i, f, g, o; forget-gate bias starts at 1.0; recurrent weights
    initialized orthogonal per gate block.
    """

    def __init__(self, in_dim, hidden, rng, dtype=np.float32, group="head", name="lstm"):
        self.in_dim, self.hidden = in_dim, hidden
        self.Wx = Parameter(kaiming_uniform(rng, (in_dim, 4 * hidden), in_dim, dtype),
                            name=f"{name}.Wx", group=group)
        wh = np.concatenate([orthogonal(rng, hidden, dtype) for _ in range(4)], axis=1)
        self.Wh = Parameter(wh, name=f"{name}.Wh", group=group)
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden:2 * hidden] = 1.0
        self.b = Parameter(b, name=f"{name}.b", group=group)

    def params(self):
        return [self.Wx, self.Wh, self.b]

    def forward(self, x, mode=TRAIN, rng=None):
        if x.ndim != 3 or x.shape[2] != self.in_dim:
            raise ShapeMismatch(self.Wx.name, f"(B, T, {self.in_dim})", x.shape)
        B, T, _ = x.shape
        H = self.hidden
        h = np.zeros((B, H), dtype=x.dtype)
        c = np.zeros((B, H), dtype=x.dtype)
        pre = x @ self.Wx.value + self.b.value  # (B, T, 4H)
        ys = np.empty((B, T, H), dtype=x.dtype)
        steps = []
        for t in range(T):
            z = pre[:, t] + h @ self.Wh.value
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = _sigmoid(z[:, 3 * H:])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h_prev = h
            h = o * tc
            ys[:, t] = h
            steps.append((i, f, g, o, c_prev, tc, h_prev))
        return ys, (x, steps)

    def backward(self, cache, dy):
        x, steps = cache
        B, T, _ = x.shape
        H = self.hidden
        dh_next = np.zeros((B, H), dtype=dy.dtype)
        dc_next = np.zeros((B, H), dtype=dy.dtype)
        dpre = np.empty((B, T, 4 * H), dtype=dy.dtype)
        dWh = np.zeros_like(self.Wh.value)
        for t in range(T - 1, -1, -1):
            i, f, g, o, c_prev, tc, h_prev = steps[t]
            dh = dy[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1 - tc * tc) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                 dg * (1 - g * g), do * o * (1 - o)], axis=1)
            dpre[:, t] = dz
            dWh += h_prev.T @ dz
            dh_next = dz @ self.Wh.value.T
        dpre2 = dpre.reshape(B * T, 4 * H)
        self.Wx.grad += x.reshape(B * T, -1).T @ dpre2
        self.Wh.grad += dWh
        self.b.grad += dpre2.sum(axis=0)
        return (dpre2 @ self.Wx.value.T).reshape(x.shape)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_lastaxis(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class MultiHeadSelfAttention(Layer):
    def __init__(self, dim, heads, rng, dtype=np.float32, group="head", name="mhsa"):
        if dim % heads:
            raise ShapeMismatch(name, "dim divisible by heads", (dim, heads))
        self.dim, self.heads = dim, heads
        self.dh = dim // heads
        self.Wq = Parameter(kaiming_uniform(rng, (dim, dim), dim, dtype), name=f"{name}.Wq", group=group)
        self.Wk = Parameter(kaiming_uniform(rng, (dim, dim), dim, dtype), name=f"{name}.Wk", group=group)
        self.Wv = Parameter(kaiming_uniform(rng, (dim, dim), dim, dtype), name=f"{name}.Wv", group=group)
        self.Wo = Parameter(kaiming_uniform(rng, (dim, dim), dim, dtype), name=f"{name}.Wo", group=group)
        self.bq = Parameter(np.zeros(dim, dtype=dtype), name=f"{name}.bq", group=group)
        self.bk = Parameter(np.zeros(dim, dtype=dtype), name=f"{name}.bk", group=group)
        self.bv = Parameter(np.zeros(dim, dtype=dtype), name=f"{name}.bv", group=group)
        self.bo = Parameter(np.zeros(dim, dtype=dtype), name=f"{name}.bo", group=group)
        self.last_attention = None  # (B, heads, T, T) from the latest forward

    def params(self):
        return [self.Wq, self.bq, self.Wk, self.bk, self.Wv, self.bv, self.Wo, self.bo]

    def _split(self, z, B, T):
        return z.reshape(B, T, self.heads, self.dh).transpose(0, 2, 1, 3)

    def forward(self, x, mode=TRAIN, rng=None):
        if x.shape[-1] != self.dim:
            raise ShapeMismatch(self.Wq.name, f"(B, T, {self.dim})", x.shape)
        B, T, _ = x.shape
        q = self._split(x @ self.Wq.value + self.bq.value, B, T)
        k = self._split(x @ self.Wk.value + self.bk.value, B, T)
        v = self._split(x @ self.Wv.value + self.bv.value, B, T)
        scale = x.dtype.type(1.0 / np.sqrt(self.dh))
        att = softmax_lastaxis(np.einsum("bhtd,bhsd->bhts", q, k) * scale)
        self.last_attention = att
        ctx = np.einsum("bhts,bhsd->bhtd", att, v)
        merged = ctx.transpose(0, 2, 1, 3).reshape(B, T, self.dim)
        y = merged @ self.Wo.value + self.bo.value
        return y, (x, q, k, v, att, merged)

    def backward(self, cache, dy):
        x, q, k, v, att, merged = cache
        B, T, _ = x.shape
        dy2 = dy.reshape(B * T, self.dim)
        self.Wo.grad += merged.reshape(B * T, -1).T @ dy2
        self.bo.grad += dy2.sum(axis=0)
        dmerged = (dy2 @ self.Wo.value.T).reshape(B, T, self.heads, self.dh).transpose(0, 2, 1, 3)
        datt = np.einsum("bhtd,bhsd->bhts", dmerged, v)
        dv = np.einsum("bhts,bhtd->bhsd", att, dmerged)
        ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
        scale = dy.dtype.type(1.0 / np.sqrt(self.dh))
        ds = ds * scale
        dq = np.einsum("bhts,bhsd->bhtd", ds, k)
        dk = np.einsum("bhts,bhtd->bhsd", ds, q)

        def merge(z):
            return z.transpose(0, 2, 1, 3).reshape(B * T, self.dim)

        x2 = x.reshape(B * T, self.dim)
        dx = np.zeros_like(x2)
        for dz, W, b in ((dq, self.Wq, self.bq), (dk, self.Wk, self.bk), (dv, self.Wv, self.bv)):
            dz2 = merge(dz)
            W.grad += x2.T @ dz2
            b.grad += dz2.sum(axis=0)
            dx += dz2 @ W.value.T
        return dx.reshape(x.shape)


class PatchEmbed(Layer):
    """Flatten non-overlapping time patches and project to an embedding."""

    def __init__(self, patch_len, in_dim, embed_dim, rng, dtype=np.float32, group="head", name="patch"):
        self.patch_len, self.in_dim, self.embed_dim = patch_len, in_dim, embed_dim
        self.proj = Linear(patch_len * in_dim, embed_dim, rng, dtype, group, name=f"{name}.proj")

    def params(self):
        return self.proj.params()

    def children(self):
        return [self.proj]

    def forward(self, x, mode=TRAIN, rng=None):
        B, T, C = x.shape
        if C != self.in_dim:
            raise ShapeMismatch("patch_embed", f"(B, T, {self.in_dim})", x.shape)
        if T % self.patch_len:
            raise PatchLengthIndivisible(f"length {T} not divisible by patch {self.patch_len}")
        n = T // self.patch_len
        flat = x.reshape(B, n, self.patch_len * C)
        y, c = self.proj.forward(flat, mode, rng)
        return y, (c, x.shape)

    def backward(self, cache, dy):
        c, shape = cache
        dflat = self.proj.backward(c, dy)
        return dflat.reshape(shape)


class PositionalEncoding(Layer):
    """Learnable additive positional table (max_len, dim)."""

    def __init__(self, max_len, dim, rng, dtype=np.float32, group="head", name="pos"):
        self.P = Parameter((rng.standard_normal((max_len, dim)) * 0.02).astype(dtype),
                           name=f"{name}.P", group=group)

    def params(self):
        return [self.P]

    def forward(self, x, mode=TRAIN, rng=None):
        T = x.shape[1]
        if T > self.P.shape[0]:
            raise ShapeMismatch(self.P.name, f"T <= {self.P.shape[0]}", x.shape)
        return x + self.P.value[:T], T

    def backward(self, T, dy):
        self.P.grad[:T] += dy.sum(axis=0)
        return dy


class ClsToken(Layer):
    """Prepend a learnable classification token to the sequence."""

    def __init__(self, dim, rng, dtype=np.float32, group="head", name="cls"):
        self.tok = Parameter((rng.standard_normal((1, 1, dim)) * 0.02).astype(dtype),
                             name=f"{name}.tok", group=group)

    def params(self):
        return [self.tok]

    def forward(self, x, mode=TRAIN, rng=None):
        B = x.shape[0]
        tok = np.broadcast_to(self.tok.value, (B, 1, x.shape[2]))
        return np.concatenate([tok, x], axis=1), None

    def backward(self, cache, dy):
        self.tok.grad += dy[:, :1].sum(axis=0, keepdims=True)
        return dy[:, 1:]


class TakeFirstToken(Layer):
    """(B, T, D) -> (B, D), keeping token 0 (the cls position)."""

    def forward(self, x, mode=TRAIN, rng=None):
        return x[:, 0], x.shape

    def backward(self, shape, dy):
        dx = np.zeros(shape, dtype=dy.dtype)
        dx[:, 0] = dy
        return dx


class TakeLastStep(Layer):
    """(B, T, D) -> (B, D), keeping the final time step."""

    def forward(self, x, mode=TRAIN, rng=None):
        return x[:, -1], x.shape

    def backward(self, shape, dy):
        dx = np.zeros(shape, dtype=dy.dtype)
        dx[:, -1] = dy
        return dx


class ResidualBlock1D(Layer):
    """Conv-BN-ReLU-Conv-BN plus a strided 1x1 projection skip, ReLU after add."""

    def __init__(self, in_ch, out_ch, stride, rng, dtype=np.float32, group="head", name="res"):
        self.conv1 = Conv1D(in_ch, out_ch, 3, stride=stride, padding=1, rng=rng,
                            dtype=dtype, group=group, name=f"{name}.conv1")
        self.bn1 = BatchNorm1D(out_ch, dtype=dtype, group=group, name=f"{name}.bn1")
        self.relu1 = ReLU()
        self.conv2 = Conv1D(out_ch, out_ch, 3, stride=1, padding=1, rng=rng,
                            dtype=dtype, group=group, name=f"{name}.conv2")
        self.bn2 = BatchNorm1D(out_ch, dtype=dtype, group=group, name=f"{name}.bn2")
        self.proj = Conv1D(in_ch, out_ch, 1, stride=stride, padding=0, rng=rng,
                           dtype=dtype, group=group, name=f"{name}.proj")
        self.bn_proj = BatchNorm1D(out_ch, dtype=dtype, group=group, name=f"{name}.bn_proj")
        self.relu_out = ReLU()

    def children(self):
        return [self.conv1, self.bn1, self.relu1, self.conv2, self.bn2,
                self.proj, self.bn_proj, self.relu_out]

    def params(self):
        out = []
        for c in self.children():
            out.extend(c.params())
        return out

    def buffers(self):
        out = []
        for c in self.children():
            out.extend(c.buffers())
        return out

    def forward(self, x, mode=TRAIN, rng=None):
        h, c1 = self.conv1.forward(x, mode, rng)
        h, c2 = self.bn1.forward(h, mode, rng)
        h, c3 = self.relu1.forward(h, mode, rng)
        h, c4 = self.conv2.forward(h, mode, rng)
        h, c5 = self.bn2.forward(h, mode, rng)
        s, c6 = self.proj.forward(x, mode, rng)
        s, c7 = self.bn_proj.forward(s, mode, rng)
        y, c8 = self.relu_out.forward(h + s, mode, rng)
        return y, (c1, c2, c3, c4, c5, c6, c7, c8)

    def backward(self, cache, dy):
        c1, c2, c3, c4, c5, c6, c7, c8 = cache
        dsum = self.relu_out.backward(c8, dy)
        ds = self.bn_proj.backward(c7, dsum)
        dx_skip = self.proj.backward(c6, ds)
        dh = self.bn2.backward(c5, dsum)
        dh = self.conv2.backward(c4, dh)
        dh = self.relu1.backward(c3, dh)
        dh = self.bn1.backward(c2, dh)
        dx_main = self.conv1.backward(c1, dh)
        return dx_main + dx_skip


class TransformerBlock(Layer):
    """Pre-LayerNorm encoder block: x + MHSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, dim, heads, mlp_dim, rng, dtype=np.float32, group="head",
                 name="xf", dropout=0.0):
        self.ln1 = LayerNorm(dim, dtype=dtype, group=group, name=f"{name}.ln1")
        self.attn = MultiHeadSelfAttention(dim, heads, rng, dtype, group, name=f"{name}.attn")
        self.ln2 = LayerNorm(dim, dtype=dtype, group=group, name=f"{name}.ln2")
        self.fc1 = Linear(dim, mlp_dim, rng, dtype, group, name=f"{name}.fc1")
        self.act = ReLU()
        self.fc2 = Linear(mlp_dim, dim, rng, dtype, group, name=f"{name}.fc2")
        self.drop = Dropout(dropout)

    def children(self):
        return [self.ln1, self.attn, self.ln2, self.fc1, self.act, self.fc2, self.drop]

    def params(self):
        out = []
        for c in self.children():
            out.extend(c.params())
        return out

    def forward(self, x, mode=TRAIN, rng=None):
        h, c1 = self.ln1.forward(x, mode, rng)
        h, c2 = self.attn.forward(h, mode, rng)
        h, cd = self.drop.forward(h, mode, rng)
        x1 = x + h
        h, c3 = self.ln2.forward(x1, mode, rng)
        h, c4 = self.fc1.forward(h, mode, rng)
        h, c5 = self.act.forward(h, mode, rng)
        h, c6 = self.fc2.forward(h, mode, rng)
        y = x1 + h
        return y, (c1, c2, cd, c3, c4, c5, c6)

    def backward(self, cache, dy):
        c1, c2, cd, c3, c4, c5, c6 = cache
        dh = self.fc2.backward(c6, dy)
        dh = self.act.backward(c5, dh)
        dh = self.fc1.backward(c4, dh)
        dx1 = dy + self.ln2.backward(c3, dh)
        dh = self.drop.backward(cd, dx1)
        dh = self.attn.backward(c2, dh)
        dx = dx1 + self.ln1.backward(c1, dh)
        return dx
