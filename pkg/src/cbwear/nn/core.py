"""Reverse-mode differentiable core.

Layers are explicit forward/backward pairs over numpy arrays. A forward pass
returns the output together with a cache (the tape); backward consumes the
tape once, accumulating gradients into each Parameter. Compute dtype is fp32
by default and fp64 in gradient-check mode; the dtype is fixed when a model
is built and every layer follows it.

Activation layout is (batch, time, channels) throughout.
"""

from __future__ import annotations

import zlib

import numpy as np

from ..errors import TapeConsumed

TRAIN = "train"
INFER = "infer"


def rng_for(seed: int, *tags) -> np.random.Generator:
    """Independent, reproducible RNG stream for (seed, tags)."""
    words = [int(seed) & 0xFFFFFFFF]
    for t in tags:
        words.append(zlib.crc32(str(t).encode()) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))


class Parameter:
    """A trainable array with its gradient and Adam state."""

    def __init__(self, value: np.ndarray, name: str = "", group: str = "head"):
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)
        self.name = name
        self.group = group
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step = 0

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


class Buffer:
    """Non-trainable state carried by a layer (e.g. BatchNorm running stats)."""

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.ascontiguousarray(value)
        self.name = name


class Layer:
    """Base layer: params/buffers discovery plus forward/backward."""

    def params(self) -> list[Parameter]:
        return []

    def buffers(self) -> list[Buffer]:
        return []

    def forward(self, x, mode=TRAIN, rng=None):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError

    def children(self) -> list["Layer"]:
        return []

    def walk(self):
        """Yield self and all descendant layers, depth first."""
        yield self
        for c in self.children():
            yield from c.walk()


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        self.layers = list(layers)

    def children(self):
        return self.layers

    def params(self):
        out = []
        for l in self.layers:
            out.extend(l.params())
        return out

    def buffers(self):
        out = []
        for l in self.layers:
            out.extend(l.buffers())
        return out

    def forward(self, x, mode=TRAIN, rng=None):
        caches = []
        for l in self.layers:
            x, c = l.forward(x, mode, rng)
            caches.append(c)
        return x, caches

    def backward(self, caches, dy):
        for l, c in zip(reversed(self.layers), reversed(caches)):
            dy = l.backward(c, dy)
        return dy


class Tape:
    """Single-use record of one forward pass."""

    def __init__(self, model: Layer, cache):
        self.model = model
        self.cache = cache
        self.consumed = False


def model_forward(model: Layer, x, mode=TRAIN, rng=None):
    """Run a model forward, returning (output, tape)."""
    y, cache = model.forward(x, mode, rng)
    return y, Tape(model, cache)


def model_backward(tape: Tape, dy):
    """Propagate dy through the tape once, accumulating parameter grads.

    Returns the gradient with respect to the model input. A second call on
    the same tape raises TapeConsumed.
    """
    if tape.consumed:
        raise TapeConsumed("backward already called on this tape")
    tape.consumed = True
    return tape.model.backward(tape.cache, dy)


def snapshot_state(model: Layer):
    """Copy of all parameter values and buffer values."""
    return (
        [p.value.copy() for p in model.params()],
        [b.value.copy() for b in model.buffers()],
    )


def restore_state(model: Layer, snap):
    pvals, bvals = snap
    for p, v in zip(model.params(), pvals):
        p.value[...] = v
    for b, v in zip(model.buffers(), bvals):
        b.value[...] = v
