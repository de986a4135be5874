"""Multimodal fusion heads over the per-modality encoders.

Three strategies: pooled-feature concatenation into an MLP, temporal
self-attention over depth-stacked time-aligned sequences, and cross-modal
attention over time-concatenated sequences. Both attention heads classify
from the cls token. Encoder sequences are nearest-neighbor resampled to a
common grid and linearly projected to the shared model width where needed.

Every fused model also exposes `modality_embeddings` (the per-modality
representation its head consumes) and `logits_from_embeddings`, which is the
masking surface used for modality-level attribution.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .encoders import Encoder
from .nn.core import INFER, TRAIN, Layer, Sequential
from .nn import layers as nl

MODALITIES = ("accel", "eda", "temp")


class FusionKind(enum.Enum):
    CONCAT_MLP = "concat"
    TEMPORAL_VIT = "tvit"
    CROSSMODAL_VIT = "xvit"


@dataclass(frozen=True)
class FusionConfig:
    kind: FusionKind = FusionKind.CONCAT_MLP
    dim: int = 128          # shared model width and ViT embedding dim
    depth: int = 2
    heads: int = 4
    mlp_dim: int = 256
    patch_len: int = 10
    fused_seq_len: int = 50  # grid the modality sequences are aligned to
    mlp_hidden: int = 256    # concat-MLP hidden width
    mlp_layers: int = 3
    num_classes: int = 2

    def __post_init__(self):
        if self.fused_seq_len % self.patch_len:
            raise ValueError("patch_len must divide fused_seq_len")


class UnimodalClassifier(Layer):
    """Encoder trunk, its pooling, and a linear classification head."""

    def __init__(self, encoder: Encoder, num_classes, rng, dtype=np.float32):
        self.encoder = encoder
        self.pool = encoder.pool_layer()
        self.head = nl.Linear(encoder.d_m, num_classes, rng, dtype, group="head",
                              name=f"{encoder.name}_head")

    def children(self):
        return [self.encoder.trunk, self.pool, self.head]

    def params(self):
        return self.encoder.trunk.params() + self.head.params()

    def buffers(self):
        return self.encoder.trunk.buffers()

    def forward(self, x, mode=TRAIN, rng=None):
        seq, c1 = self.encoder.trunk.forward(x, mode, rng)
        pooled, c2 = self.pool.forward(seq, mode, rng)
        logits, c3 = self.head.forward(pooled, mode, rng)
        return logits, (c1, c2, c3)

    def backward(self, cache, dy):
        c1, c2, c3 = cache
        d = self.head.backward(c3, dy)
        d = self.pool.backward(c2, d)
        return self.encoder.trunk.backward(c1, d)


class _ViTHead(Layer):
    """Patchify, prepend cls token, add positions, run encoder blocks, and
    classify from the cls position."""

    def __init__(self, in_dim, seq_len, cfg: FusionConfig, rng, dtype, name):
        n_patches = seq_len // cfg.patch_len
        self.stack = Sequential(
            nl.PatchEmbed(cfg.patch_len, in_dim, cfg.dim, rng, dtype, "head", f"{name}.patch"),
            nl.ClsToken(cfg.dim, rng, dtype, "head", f"{name}.cls"),
            nl.PositionalEncoding(n_patches + 1, cfg.dim, rng, dtype, "head", f"{name}.pos"),
            *[nl.TransformerBlock(cfg.dim, cfg.heads, cfg.mlp_dim, rng, dtype, "head",
                                  f"{name}.block{i + 1}") for i in range(cfg.depth)],
            nl.TakeFirstToken(),
            nl.Linear(cfg.dim, cfg.num_classes, rng, dtype, "head", f"{name}.out"),
        )

    def children(self):
        return [self.stack]

    def params(self):
        return self.stack.params()

    def buffers(self):
        return self.stack.buffers()

    def forward(self, x, mode=TRAIN, rng=None):
        return self.stack.forward(x, mode, rng)

    def backward(self, cache, dy):
        return self.stack.backward(cache, dy)

    def attention_layers(self):
        return [l for l in self.stack.walk() if isinstance(l, nl.MultiHeadSelfAttention)]


class _FusedBase(Layer):
    """Shared plumbing: three encoder trunks plus a per-modality adapter
    (resampling/projection/pooling), then a head over the joined embedding."""

    def __init__(self, encoders: dict[str, Encoder]):
        self.encoders = encoders

    def children(self):
        out = [self.encoders[m].trunk for m in MODALITIES]
        out.extend(self._adapter(m) for m in MODALITIES if self._adapter(m) is not None)
        out.append(self._head())
        return out

    def params(self):
        out = []
        for m in MODALITIES:
            out.extend(self.encoders[m].trunk.params())
        for m in MODALITIES:
            a = self._adapter(m)
            if a is not None:
                out.extend(a.params())
        out.extend(self._head().params())
        return out

    def buffers(self):
        out = []
        for m in MODALITIES:
            out.extend(self.encoders[m].trunk.buffers())
        for m in MODALITIES:
            a = self._adapter(m)
            if a is not None:
                out.extend(a.buffers())
        out.extend(self._head().buffers())
        return out

    def _adapter(self, modality) -> Layer | None:
        raise NotImplementedError

    def _head(self) -> Layer:
        raise NotImplementedError

    def _join(self, embs):
        raise NotImplementedError

    def _split(self, djoined, embs):
        raise NotImplementedError

    def forward(self, inputs, mode=TRAIN, rng=None):
        embs, caches = [], []
        for m, x in zip(MODALITIES, inputs):
            seq, ct = self.encoders[m].trunk.forward(x, mode, rng)
            a = self._adapter(m)
            if a is not None:
                emb, ca = a.forward(seq, mode, rng)
            else:
                emb, ca = seq, None
            embs.append(emb)
            caches.append((ct, ca))
        joined = self._join(embs)
        logits, ch = self._head().forward(joined, mode, rng)
        return logits, (caches, embs, ch)

    def backward(self, cache, dy):
        caches, embs, ch = cache
        djoined = self._head().backward(ch, dy)
        dembs = self._split(djoined, embs)
        dxs = []
        for m, (ct, ca), demb in zip(MODALITIES, caches, dembs):
            a = self._adapter(m)
            dseq = a.backward(ca, demb) if a is not None else demb
            dxs.append(self.encoders[m].trunk.backward(ct, dseq))
        return tuple(dxs)

    def modality_embeddings(self, inputs, mode=INFER, rng=None):
        out = []
        for m, x in zip(MODALITIES, inputs):
            seq, _ = self.encoders[m].trunk.forward(x, mode, rng)
            a = self._adapter(m)
            emb = a.forward(seq, mode, rng)[0] if a is not None else seq
            out.append(emb)
        return out

    def logits_from_embeddings(self, embs, mode=INFER, rng=None):
        return self._head().forward(self._join(list(embs)), mode, rng)[0]


class ConcatMLPFusion(_FusedBase):
    """Temporal pooling, feature concatenation, and an MLP classifier."""

    def __init__(self, encoders: dict[str, Encoder], cfg: FusionConfig, rng, dtype=np.float32):
        super().__init__(encoders)
        self.cfg = cfg
        self.adapters = {m: encoders[m].pool_layer() for m in MODALITIES}
        concat_dim = sum(encoders[m].d_m for m in MODALITIES)
        self.concat_dim = concat_dim
        layers = []
        in_dim = concat_dim
        for i in range(cfg.mlp_layers):
            layers.extend([nl.Linear(in_dim, cfg.mlp_hidden, rng, dtype, "head",
                                     f"fuse_mlp.fc{i + 1}"), nl.ReLU()])
            in_dim = cfg.mlp_hidden
        layers.append(nl.Linear(in_dim, cfg.num_classes, rng, dtype, "head", "fuse_mlp.out"))
        self.mlp = Sequential(*layers)

    def _adapter(self, modality):
        return self.adapters[modality]

    def _head(self):
        return self.mlp

    def _join(self, embs):
        return np.concatenate(embs, axis=1)

    def _split(self, djoined, embs):
        dims = np.cumsum([e.shape[1] for e in embs])[:-1]
        return np.split(djoined, dims, axis=1)


class _SeqAdapter(Layer):
    """Resample a sequence to the fused grid and project to the model width."""

    def __init__(self, d_in, cfg: FusionConfig, rng, dtype, name):
        self.resample = nl.Resample1D(cfg.fused_seq_len)
        self.proj = (nl.Linear(d_in, cfg.dim, rng, dtype, "head", f"{name}.proj")
                     if d_in != cfg.dim else None)

    def children(self):
        return [self.resample] + ([self.proj] if self.proj else [])

    def params(self):
        return self.proj.params() if self.proj else []

    def forward(self, x, mode=TRAIN, rng=None):
        y, c1 = self.resample.forward(x, mode, rng)
        if self.proj:
            y, c2 = self.proj.forward(y, mode, rng)
        else:
            c2 = None
        return y, (c1, c2)

    def backward(self, cache, dy):
        c1, c2 = cache
        if self.proj:
            dy = self.proj.backward(c2, dy)
        return self.resample.backward(c1, dy)


class TemporalViTFusion(_FusedBase):
    """Depth-stack time-aligned modality sequences and attend across time."""

    def __init__(self, encoders: dict[str, Encoder], cfg: FusionConfig, rng, dtype=np.float32):
        super().__init__(encoders)
        self.cfg = cfg
        self.adapters = {m: _SeqAdapter(encoders[m].d_m, cfg, rng, dtype, f"tvit_{m}")
                         for m in MODALITIES}
        self.vit = _ViTHead(3 * cfg.dim, cfg.fused_seq_len, cfg, rng, dtype, "tvit")

    def _adapter(self, modality):
        return self.adapters[modality]

    def _head(self):
        return self.vit

    def _join(self, embs):
        return np.concatenate(embs, axis=2)

    def _split(self, djoined, embs):
        dims = np.cumsum([e.shape[2] for e in embs])[:-1]
        return np.split(djoined, dims, axis=2)


class CrossModalViTFusion(_FusedBase):
    """Concatenate modality sequences along time so attention spans both
    time steps and modality boundaries."""

    def __init__(self, encoders: dict[str, Encoder], cfg: FusionConfig, rng, dtype=np.float32):
        super().__init__(encoders)
        self.cfg = cfg
        self.adapters = {m: _SeqAdapter(encoders[m].d_m, cfg, rng, dtype, f"xvit_{m}")
                         for m in MODALITIES}
        self.vit = _ViTHead(cfg.dim, 3 * cfg.fused_seq_len, cfg, rng, dtype, "xvit")

    def _adapter(self, modality):
        return self.adapters[modality]

    def _head(self):
        return self.vit

    def _join(self, embs):
        return np.concatenate(embs, axis=1)

    def _split(self, djoined, embs):
        dims = np.cumsum([e.shape[1] for e in embs])[:-1]
        return np.split(djoined, dims, axis=1)


FUSION_CLASSES = {
    FusionKind.CONCAT_MLP: ConcatMLPFusion,
    FusionKind.TEMPORAL_VIT: TemporalViTFusion,
    FusionKind.CROSSMODAL_VIT: CrossModalViTFusion,
}


def build_fusion(encoders: dict[str, Encoder], cfg: FusionConfig, rng, dtype=np.float32):
    return FUSION_CLASSES[cfg.kind](encoders, cfg, rng, dtype)
