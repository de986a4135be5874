"""Per-modality encoders.

Accelerometer: a ResNet-style 1D miniature, a DeepConvLSTM hybrid, and a
patch transformer. EDA: a convolutional autoencoder whose encoder doubles as
the supervised feature extractor. Temperature: a light 1D CNN. Every encoder
maps (batch, 150, c_in) windows to a temporal feature sequence plus a pooled
embedding (mean over time, except the LSTM's last hidden step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCorpus
from .nn.core import INFER, TRAIN, Layer, Sequential, model_backward, model_forward
from .nn import layers as nl
from .nn.losses import mse
from .nn.optim import Adam

ACCEL_EMBED_DIM = 128
EDA_EMBED_DIM = 64
TEMP_EMBED_DIM = 64

ACCEL_ARCHS = ("resnet", "dclstm", "transformer")


@dataclass
class Encoder:
    """A modality trunk producing a feature sequence (B, T', d_m)."""

    trunk: Layer
    d_m: int
    in_ch: int
    pool: str  # "mean" | "last"
    name: str
    cam_layer: object = None  # designated conv layer for activation maps

    def pool_layer(self) -> Layer:
        return nl.GlobalAvgPool() if self.pool == "mean" else nl.TakeLastStep()

    def params(self):
        return self.trunk.params()

    def buffers(self):
        return self.trunk.buffers()


def build_accel_resnet(rng, dtype=np.float32, stem_ch=32, block_ch=(32, 64, 96, 128),
                       group="accel") -> Encoder:
    """Stem conv (k7, s2) plus four stride-2 residual blocks."""
    layers = [
        nl.Conv1D(3, stem_ch, 7, stride=2, padding=3, rng=rng, dtype=dtype,
                  group=group, name="acc_res.stem"),
        nl.BatchNorm1D(stem_ch, dtype=dtype, group=group, name="acc_res.stem_bn"),
        nl.ReLU(),
    ]
    ch = stem_ch
    blocks = []
    for i, out in enumerate(block_ch):
        blk = nl.ResidualBlock1D(ch, out, stride=2, rng=rng, dtype=dtype,
                                 group=group, name=f"acc_res.block{i + 1}")
        blocks.append(blk)
        layers.append(blk)
        ch = out
    return Encoder(Sequential(*layers), d_m=ch, in_ch=3, pool="mean",
                   name="resnet", cam_layer=blocks[-1].conv2)


def build_deepconvlstm(rng, dtype=np.float32, conv_ch=64, n_convs=5, lstm_hidden=128,
                       group="accel") -> Encoder:
    """Five stacked valid convolutions (k5) into two LSTM layers; the pooled
    embedding is the final hidden state."""
    layers = []
    ch = 3
    last_conv = None
    for i in range(n_convs):
        last_conv = nl.Conv1D(ch, conv_ch, 5, stride=1, padding=0, rng=rng, dtype=dtype,
                              group=group, name=f"acc_dcl.conv{i + 1}")
        layers.extend([last_conv, nl.ReLU()])
        ch = conv_ch
    layers.append(nl.LSTM(ch, lstm_hidden, rng, dtype=dtype, group=group, name="acc_dcl.lstm1"))
    layers.append(nl.LSTM(lstm_hidden, lstm_hidden, rng, dtype=dtype, group=group, name="acc_dcl.lstm2"))
    return Encoder(Sequential(*layers), d_m=lstm_hidden, in_ch=3, pool="last",
                   name="dclstm", cam_layer=last_conv)


def build_accel_transformer(rng, dtype=np.float32, patch_len=15, dim=128, depth=2,
                            heads=4, mlp_dim=256, max_patches=64, group="accel") -> Encoder:
    """Patch embedding (15 samples), learnable positional encodings, and a
    stack of pre-LN transformer encoder layers; mean-pooled embedding."""
    layers = [
        nl.PatchEmbed(patch_len, 3, dim, rng, dtype=dtype, group=group, name="acc_xf.patch"),
        nl.PositionalEncoding(max_patches, dim, rng, dtype=dtype, group=group, name="acc_xf.pos"),
    ]
    for i in range(depth):
        layers.append(nl.TransformerBlock(dim, heads, mlp_dim, rng, dtype=dtype,
                                          group=group, name=f"acc_xf.block{i + 1}"))
    return Encoder(Sequential(*layers), d_m=dim, in_ch=3, pool="mean",
                   name="transformer", cam_layer=None)


def _pooled_lengths(length: int, n_stages: int) -> list[int]:
    out = []
    for _ in range(n_stages):
        length = length // 2
        out.append(length)
    return out


def build_eda_autoencoder(rng, dtype=np.float32, channels=(4, 8, 16, 32, 64),
                          in_len=150, group="eda") -> tuple[Encoder, Layer]:
    """Conv encoder (BN, ReLU, stride-2 max pooling per stage) and a mirrored
    transposed-conv decoder reconstructing the input length.

    The pooled embedding is the time mean of the final per-step features
    (a pointwise linear on the 64-channel sequence), so it equals the
    global-average-pooled code through that same linear map.
    """
    enc_layers = []
    last_conv = None
    ch = 1
    for i, out in enumerate(channels):
        last_conv = nl.Conv1D(ch, out, 3, stride=1, padding=1, rng=rng, dtype=dtype,
                              group=group, name=f"eda_ae.conv{i + 1}")
        enc_layers.extend([
            last_conv,
            nl.BatchNorm1D(out, dtype=dtype, group=group, name=f"eda_ae.bn{i + 1}"),
            nl.ReLU(),
            nl.MaxPool1D(2, 2),
        ])
        ch = out
    embed = nl.Linear(ch, ch, rng, dtype=dtype, group=group, name="eda_ae.embed")
    encoder = Encoder(Sequential(*enc_layers, embed), d_m=ch, in_ch=1, pool="mean",
                      name="eda_autoencoder", cam_layer=last_conv)

    enc_lens = _pooled_lengths(in_len, len(channels))
    targets = enc_lens[-2::-1] + [in_len]  # mirrored stage lengths
    dec_layers = []
    dch = ch
    for i, out in enumerate(reversed((1,) + tuple(channels[:-1]))):
        dec_layers.append(nl.TransposedConv1D(dch, out, 3, 2, rng=rng, dtype=dtype,
                                              group=group, name=f"eda_ae.tconv{i + 1}"))
        dec_layers.append(nl.Crop1D(targets[i]))
        if out != 1:
            dec_layers.extend([
                nl.BatchNorm1D(out, dtype=dtype, group=group, name=f"eda_ae.dbn{i + 1}"),
                nl.ReLU(),
            ])
        dch = out
    decoder = Sequential(*dec_layers)
    return encoder, decoder


def build_temp_cnn(rng, dtype=np.float32, channels=(16, 32, 64), kernels=(7, 5, 3),
                   group="temp") -> Encoder:
    """Three valid convolutions (kernels 7, 5, 3) with channel depth rising
    to 64; adaptive average pooling yields the embedding."""
    layers = []
    ch = 1
    last_conv = None
    for i, (out, k) in enumerate(zip(channels, kernels)):
        last_conv = nl.Conv1D(ch, out, k, stride=1, padding=0, rng=rng, dtype=dtype,
                              group=group, name=f"temp_cnn.conv{i + 1}")
        layers.extend([last_conv, nl.ReLU()])
        ch = out
    return Encoder(Sequential(*layers), d_m=ch, in_ch=1, pool="mean",
                   name="temp_cnn", cam_layer=last_conv)


def build_accel_encoder(arch: str, rng, dtype=np.float32, **kw) -> Encoder:
    if arch == "resnet":
        return build_accel_resnet(rng, dtype=dtype, **kw)
    if arch == "dclstm":
        return build_deepconvlstm(rng, dtype=dtype, **kw)
    if arch == "transformer":
        return build_accel_transformer(rng, dtype=dtype, **kw)
    raise ValueError(f"unknown accelerometer architecture {arch!r}")


class Autoencoder(Layer):
    """Encoder trunk plus decoder, for reconstruction pretraining."""

    def __init__(self, encoder: Encoder, decoder: Layer):
        self.encoder = encoder
        self.decoder = decoder

    def children(self):
        return [self.encoder.trunk, self.decoder]

    def params(self):
        return self.encoder.trunk.params() + self.decoder.params()

    def buffers(self):
        return self.encoder.trunk.buffers() + self.decoder.buffers()

    def forward(self, x, mode=TRAIN, rng=None):
        code, c1 = self.encoder.trunk.forward(x, mode, rng)
        recon, c2 = self.decoder.forward(code, mode, rng)
        return recon, (c1, c2)

    def backward(self, cache, dy):
        c1, c2 = cache
        dcode = self.decoder.backward(c2, dy)
        return self.encoder.trunk.backward(c1, dcode)


def pretrain_autoencoder(encoder: Encoder, decoder: Layer, windows: np.ndarray,
                         epochs: int, lr=1e-3, batch_size=32, seed=0):
    """Minimize reconstruction MSE of tonic windows; returns per-epoch losses.

    `windows` is (N, L, 1) unlabeled tonic slices. The encoder is updated in
    place and ready for supervised fine-tuning afterwards.
    """
    if windows.shape[0] == 0:
        raise EmptyCorpus("no unlabeled windows to pretrain on")
    model = Autoencoder(encoder, decoder)
    opt = Adam(model.params(), lr=lr, weight_decay=0.0)
    rng = np.random.default_rng(seed)
    losses = []
    n = windows.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for s in range(0, n, batch_size):
            xb = windows[order[s:s + batch_size]]
            recon, tape = model_forward(model, xb, TRAIN)
            loss, drecon = mse(recon, xb)
            model_backward(tape, drecon)
            opt.step()
            opt.zero_grad()
            epoch_loss += loss
            batches += 1
        losses.append(epoch_loss / batches)
    return losses
