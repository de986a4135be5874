"""Finite-difference gradient checks and forward contracts for every layer type."""

import numpy as np
import pytest

from cbwear.errors import PatchLengthIndivisible, ShapeMismatch, TapeConsumed
from cbwear.nn import Sequential, model_backward, model_forward
from cbwear.nn.gradcheck import check_gradients
from cbwear.nn import layers as L


def rng64(seed=0):
    return np.random.default_rng(seed)


def make(layer_fn, seed=0):
    return layer_fn(rng64(seed))


LAYER_CASES = [
    ("linear", lambda r: L.Linear(5, 4, r, dtype=np.float64), (3, 5)),
    ("relu", lambda r: L.ReLU(), (3, 6)),
    ("dropout", lambda r: L.Dropout(0.3), (4, 6)),
    ("conv1d", lambda r: L.Conv1D(3, 4, 3, stride=2, padding=1, rng=r, dtype=np.float64), (2, 11, 3)),
    ("conv1d_k7", lambda r: L.Conv1D(2, 3, 7, stride=2, padding=3, rng=r, dtype=np.float64), (2, 16, 2)),
    ("tconv1d", lambda r: L.TransposedConv1D(3, 2, 3, 2, rng=r, dtype=np.float64), (2, 5, 3)),
    ("maxpool", lambda r: L.MaxPool1D(2, 2), (2, 9, 3)),
    ("gap", lambda r: L.GlobalAvgPool(), (2, 7, 3)),
    ("crop", lambda r: L.Crop1D(4), (2, 7, 3)),
    ("resample", lambda r: L.Resample1D(5), (2, 8, 3)),
    ("batchnorm", lambda r: L.BatchNorm1D(4, dtype=np.float64), (3, 6, 4)),
    ("layernorm", lambda r: L.LayerNorm(5, dtype=np.float64), (2, 4, 5)),
    ("lstm", lambda r: L.LSTM(3, 4, r, dtype=np.float64), (2, 6, 3)),
    ("mhsa", lambda r: L.MultiHeadSelfAttention(8, 2, r, dtype=np.float64), (2, 5, 8)),
    ("patch_embed", lambda r: L.PatchEmbed(3, 2, 5, r, dtype=np.float64), (2, 9, 2)),
    ("pos_enc", lambda r: L.PositionalEncoding(10, 4, r, dtype=np.float64), (2, 6, 4)),
    ("cls_token", lambda r: L.ClsToken(4, r, dtype=np.float64), (2, 3, 4)),
    ("take_first", lambda r: L.TakeFirstToken(), (2, 4, 3)),
    ("take_last", lambda r: L.TakeLastStep(), (2, 4, 3)),
    ("residual_block", lambda r: L.ResidualBlock1D(3, 4, 2, r, dtype=np.float64), (2, 8, 3)),
    ("transformer_block", lambda r: L.TransformerBlock(8, 2, 12, r, dtype=np.float64), (2, 4, 8)),
]


@pytest.mark.parametrize("name,layer_fn,xshape", LAYER_CASES, ids=[c[0] for c in LAYER_CASES])
def test_layer_gradients_match_finite_differences(name, layer_fn, xshape):
    layer = make(layer_fn, seed=7)
    x = rng64(11).standard_normal(xshape)
    check_gradients(layer, x, seed=3, tol=1e-4)


def test_linear_identity_passthrough():
    lin = L.Linear(2, 2, rng64(), dtype=np.float64)
    lin.W.value[...] = np.eye(2)
    lin.b.value[...] = 0.0
    x = np.array([[1.5, -2.0], [0.0, 3.0]])
    y, _ = lin.forward(x)
    np.testing.assert_array_equal(y, x)


def test_conv_identity_kernel():
    conv = L.Conv1D(1, 1, 3, stride=1, padding=1, rng=rng64(), dtype=np.float64)
    conv.W.value[...] = np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1)
    conv.b.value[...] = 0.0
    x = rng64(5).standard_normal((2, 10, 1))
    y, _ = conv.forward(x)
    np.testing.assert_allclose(y, x, atol=1e-12)


def test_maxpool_example():
    pool = L.MaxPool1D(2, 2)
    x = np.array([1.0, 3.0, 2.0, 5.0]).reshape(1, 4, 1)
    y, _ = pool.forward(x)
    np.testing.assert_array_equal(y.ravel(), [3.0, 5.0])


def test_conv_out_length_algebra():
    assert L.conv_out_len(150, 7, 2, 3) == 75
    assert L.conv_out_len(10, 3, 1, 1) == 10
    assert L.conv_out_len(9, 2, 2, 0) == 4


def test_scalar_chain_dl_dw():
    # y = w * x with x=3: dL/dw = 3 for L = y
    lin = L.Linear(1, 1, rng64(), dtype=np.float64)
    lin.W.value[...] = 2.0
    lin.b.value[...] = 0.0
    y, tape = model_forward(lin, np.array([[3.0]]))
    model_backward(tape, np.array([[1.0]]))
    assert lin.W.grad[0, 0] == 3.0


def test_tape_consumed_on_second_backward():
    lin = L.Linear(2, 2, rng64(), dtype=np.float64)
    y, tape = model_forward(lin, np.ones((1, 2)))
    model_backward(tape, np.ones((1, 2)))
    with pytest.raises(TapeConsumed):
        model_backward(tape, np.ones((1, 2)))


def test_shape_mismatch_reports_layer():
    lin = L.Linear(3, 2, rng64(), dtype=np.float64)
    with pytest.raises(ShapeMismatch):
        lin.forward(np.ones((1, 4)))


def test_batchnorm_infer_independent_of_batch_composition():
    bn = L.BatchNorm1D(3, dtype=np.float64)
    r = rng64(2)
    # accumulate running stats over a few train batches
    for _ in range(5):
        bn.forward(r.standard_normal((4, 6, 3)))
    x = r.standard_normal((2, 6, 3))
    y_alone, _ = bn.forward(x, mode="infer")
    big = np.concatenate([x, 10.0 + r.standard_normal((3, 6, 3))], axis=0)
    y_mixed, _ = bn.forward(big, mode="infer")
    np.testing.assert_array_equal(y_alone, y_mixed[:2])


def test_softmax_and_attention_rows_sum_to_one():
    att = L.MultiHeadSelfAttention(8, 4, rng64(0), dtype=np.float64)
    x = rng64(1).standard_normal((2, 6, 8))
    att.forward(x)
    sums = att.last_attention.sum(axis=-1)
    np.testing.assert_allclose(sums, 1.0, atol=1e-6)
    z = rng64(2).standard_normal((5, 7))
    np.testing.assert_allclose(L.softmax_lastaxis(z).sum(axis=-1), 1.0, atol=1e-6)


def test_patch_embed_rejects_indivisible_length():
    pe = L.PatchEmbed(4, 2, 3, rng64(), dtype=np.float64)
    with pytest.raises(PatchLengthIndivisible):
        pe.forward(np.ones((1, 10, 2)))


def test_dropout_infer_is_identity_and_train_uses_rng():
    d = L.Dropout(0.5)
    x = np.ones((4, 8))
    y, _ = d.forward(x, mode="infer")
    np.testing.assert_array_equal(y, x)
    y1, _ = d.forward(x, mode="train", rng=np.random.default_rng(0))
    y2, _ = d.forward(x, mode="train", rng=np.random.default_rng(0))
    np.testing.assert_array_equal(y1, y2)
    assert (y1 == 0).any()


def test_sequential_composes_and_is_deterministic():
    r = rng64(4)
    model = Sequential(
        L.Conv1D(2, 3, 3, stride=1, padding=1, rng=r, dtype=np.float64),
        L.ReLU(),
        L.GlobalAvgPool(),
        L.Linear(3, 2, r, dtype=np.float64),
    )
    x = rng64(6).standard_normal((3, 8, 2))
    y1, _ = model_forward(model, x, mode="infer")
    y2, _ = model_forward(model, x, mode="infer")
    np.testing.assert_array_equal(y1, y2)
    check_gradients(model, x, seed=1, tol=1e-4)
