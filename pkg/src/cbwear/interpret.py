"""Model interpretation: exact modality-level Shapley attribution and
gradient-weighted class activation maps over the accelerometer path."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import NoConvLayer, UntrainedModel
from .fusion import MODALITIES
from .nn.core import INFER, model_backward, model_forward
from .nn.layers import Conv1D, softmax_lastaxis
from .pipeline import Normalizer, WindowDataset, modality_inputs

N_PLAYERS = 3
_SUBSETS = [frozenset(s) for r in range(N_PLAYERS + 1)
            for s in itertools.combinations(range(N_PLAYERS), r)]


@dataclass
class ModalityAttribution:
    phi: np.ndarray          # (3,): accel, eda, temp
    v_full: float
    v_empty: float

    @property
    def efficiency_gap(self) -> float:
        return abs(float(self.phi.sum()) - (self.v_full - self.v_empty))


@dataclass
class CamMap:
    values: np.ndarray       # (150,) in [0, 1]
    source_layer: str
    sample_id: str = ""


def shapley_exact(value_fn) -> np.ndarray:
    """Exact Shapley values of a 3-player game, enumerating all 8 coalitions.

    value_fn maps a frozenset of player indices to a float; the combination
    is done in fp64 so efficiency holds to machine precision on the
    evaluated values.
    """
    v = {s: float(value_fn(s)) for s in _SUBSETS}
    n = N_PLAYERS
    phi = np.zeros(n, dtype=np.float64)
    for m in range(n):
        for s in _SUBSETS:
            if m in s:
                continue
            w = factorial(len(s)) * factorial(n - len(s) - 1) / factorial(n)
            phi[m] += w * (v[s | {m}] - v[s])
    return phi


def modality_shapley(model, X: np.ndarray, baselines: list[np.ndarray],
                     target_class: int = 1) -> ModalityAttribution:
    """Exact Shapley attribution of one window's positive-class probability
    across the three modalities.

    Masking a modality replaces its embedding with the supplied baseline
    (the training-fold mean embedding); the value of a coalition is the
    model's target-class probability with the complement masked.
    """
    embs = model.modality_embeddings(modality_inputs(X, "fused"))

    def value(subset):
        mixed = [embs[i] if i in subset else
                 np.broadcast_to(baselines[i], embs[i].shape).astype(embs[i].dtype)
                 for i in range(N_PLAYERS)]
        logits = model.logits_from_embeddings(mixed)
        return softmax_lastaxis(logits.astype(np.float64))[0, target_class]

    v_full = value(frozenset({0, 1, 2}))
    v_empty = value(frozenset())
    phi = shapley_exact(value)
    return ModalityAttribution(phi=phi, v_full=v_full, v_empty=v_empty)


def modality_baselines(model, dataset: WindowDataset, idx, normalizer: Normalizer,
                       batch_size: int = 256) -> list[np.ndarray]:
    """Per-modality mean embedding over the given (training-fold) windows."""
    idx = np.asarray(idx)
    sums = None
    total = 0
    for s in range(0, idx.size, batch_size):
        X = normalizer.apply(dataset.gather(idx[s:s + batch_size]))
        embs = model.modality_embeddings(modality_inputs(X, "fused"))
        if sums is None:
            sums = [e.astype(np.float64).sum(axis=0) for e in embs]
        else:
            for acc, e in zip(sums, embs):
                acc += e.astype(np.float64).sum(axis=0)
        total += X.shape[0]
    return [(s / total).astype(np.float32) for s in sums]


def summarize_shapley(model, dataset: WindowDataset, sample_idx, normalizer: Normalizer,
                      baselines: list[np.ndarray], target_class: int = 1):
    """Dataset-level attribution: mean |phi| per modality over sampled
    windows, normalized to shares summing to 1."""
    if model is None:
        raise UntrainedModel("a trained model is required for attribution")
    abs_sum = np.zeros(N_PLAYERS)
    per_window = []
    for i in np.asarray(sample_idx):
        X = normalizer.apply(dataset.gather([i]))
        att = modality_shapley(model, X, baselines, target_class)
        per_window.append(att)
        abs_sum += np.abs(att.phi)
    mean_abs = abs_sum / max(len(per_window), 1)
    denom = mean_abs.sum()
    shares = mean_abs / denom if denom > 0 else np.full(N_PLAYERS, 1.0 / N_PLAYERS)
    return {
        "modalities": list(MODALITIES),
        "phi_mean_abs": mean_abs,
        "share": shares,
        "n_samples": len(per_window),
        "attributions": per_window,
    }


def find_cam_layer(model) -> Conv1D:
    """The designated activation-map layer: the accelerometer encoder's last
    conv layer."""
    enc = None
    if hasattr(model, "encoders"):
        enc = model.encoders.get("accel")
    elif hasattr(model, "encoder"):
        enc = model.encoder
    if enc is None or enc.cam_layer is None:
        raise NoConvLayer("model has no conv layer on the accelerometer path")
    return enc.cam_layer


def grad_cam(model, inputs, target_class: int, layer: Conv1D | None = None,
             out_len: int = 150, sample_id: str = "") -> CamMap:
    """Gradient-weighted class activation map for one window.

    Channel weights are the time-averaged gradients of the target logit at
    the designated conv layer; the weighted activation sum is ReLU-ed,
    linearly interpolated to the window length, and max-normalized.
    """
    layer = layer or find_cam_layer(model)
    layer.capture = True
    try:
        logits, tape = model_forward(model, inputs, INFER)
        dy = np.zeros_like(logits)
        dy[:, target_class] = 1.0
        model_backward(tape, dy)
        act = layer.captured_output[0]   # (T', C)
        grad = layer.captured_grad[0]
    finally:
        layer.capture = False
        layer.captured_output = None
        layer.captured_grad = None
    weights = grad.mean(axis=0)
    cam = np.maximum((act * weights).sum(axis=1), 0.0)
    t_src = (np.arange(cam.size) + 0.5) * out_len / cam.size - 0.5
    values = np.interp(np.arange(out_len), t_src, cam)
    peak = values.max()
    if peak > 0:
        values = values / peak
    else:
        values = np.zeros(out_len)
    return CamMap(values=values, source_layer=getattr(layer.W, "name", "conv"),
                  sample_id=sample_id)
