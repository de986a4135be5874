"""Shapley axioms and Grad-CAM closed-form behavior."""

import numpy as np
import pytest

from cbwear.errors import NoConvLayer
from cbwear.interpret import (
    CamMap,
    grad_cam,
    modality_baselines,
    modality_shapley,
    shapley_exact,
    summarize_shapley,
)
from cbwear.nn import Sequential
from cbwear.nn import layers as nl


def test_shapley_additive_game_recovers_contributions():
    c = np.array([0.5, -0.2, 0.3])
    phi = shapley_exact(lambda s: sum(c[i] for i in s))
    np.testing.assert_allclose(phi, c, atol=1e-12)


def test_shapley_dummy_player_gets_zero():
    def v(s):
        return 1.0 if 0 in s else 0.0  # players 1, 2 are dummies
    phi = shapley_exact(v)
    np.testing.assert_allclose(phi, [1.0, 0.0, 0.0], atol=1e-15)


def test_shapley_symmetry():
    def v(s):
        # players 0 and 1 are interchangeable
        k = (0 in s) + (1 in s)
        return float(k * 0.4 + (2 in s) * 0.1 + (k == 2) * 0.3)
    phi = shapley_exact(v)
    assert phi[0] == pytest.approx(phi[1], abs=1e-15)


def test_shapley_efficiency_on_arbitrary_game():
    rng = np.random.default_rng(0)
    vals = {}

    def v(s):
        key = tuple(sorted(s))
        if key not in vals:
            vals[key] = float(rng.uniform(-1, 1))
        return vals[key]

    phi = shapley_exact(v)
    assert abs(phi.sum() - (v({0, 1, 2}) - v(frozenset()))) < 1e-12


def test_shapley_enumeration_fast():
    import time
    t0 = time.perf_counter()
    for _ in range(100):
        shapley_exact(lambda s: float(len(s)))
    per_call = (time.perf_counter() - t0) / 100
    assert per_call < 1e-3  # exact 8-coalition enumeration well under 1 ms


def build_toy_cam_model(head_weight=2.0, conv_weight=1.0):
    rng = np.random.default_rng(0)
    conv = nl.Conv1D(1, 1, 1, stride=1, padding=0, rng=rng, dtype=np.float64, name="toy_conv")
    conv.W.value[...] = conv_weight
    conv.b.value[...] = 0.0
    head = nl.Linear(1, 2, rng, dtype=np.float64, name="toy_head")
    head.W.value[...] = np.array([[0.0, head_weight]])
    head.b.value[...] = 0.0
    model = Sequential(conv, nl.GlobalAvgPool(), head)
    return model, conv


def test_grad_cam_matches_hand_derived_map():
    model, conv = build_toy_cam_model()
    x = np.array([0.5, -1.0, 2.0, 0.0, 1.0, -0.5, 0.25, 1.5]).reshape(1, 8, 1)
    cam = grad_cam(model, x, target_class=1, layer=conv, out_len=8)
    # hand derivation: logit1 = w_head * mean(x); dlogit/dA(t) = w_head / T;
    # CAM(t) = ReLU(x(t) * w_head / T) -> max-normalized ReLU(x)/max(ReLU(x))
    relu = np.maximum(x[0, :, 0], 0.0)
    expected = relu / relu.max()
    np.testing.assert_allclose(cam.values, expected, atol=1e-6)


def test_grad_cam_zero_input_gives_zero_map():
    model, conv = build_toy_cam_model()
    cam = grad_cam(model, np.zeros((1, 8, 1)), target_class=1, layer=conv, out_len=8)
    np.testing.assert_array_equal(cam.values, np.zeros(8))


def test_grad_cam_invariant_to_positive_head_rescale():
    x = np.random.default_rng(3).standard_normal((1, 8, 1))
    m1, c1 = build_toy_cam_model(head_weight=2.0)
    m2, c2 = build_toy_cam_model(head_weight=14.0)
    cam1 = grad_cam(m1, x, 1, layer=c1, out_len=8)
    cam2 = grad_cam(m2, x, 1, layer=c2, out_len=8)
    np.testing.assert_allclose(cam1.values, cam2.values, atol=1e-9)
    assert cam1.values.argmax() == cam2.values.argmax()


def test_grad_cam_output_contract():
    model, conv = build_toy_cam_model()
    x = np.random.default_rng(4).standard_normal((1, 37, 1))
    cam = grad_cam(model, x, 1, layer=conv, out_len=150)
    assert cam.values.shape == (150,)
    assert cam.values.min() >= 0.0 and cam.values.max() <= 1.0
    assert cam.values.max() == 1.0  # positive activations present


def test_find_cam_layer_requires_conv():
    from cbwear.interpret import find_cam_layer

    class Bare:
        pass

    with pytest.raises(NoConvLayer):
        find_cam_layer(Bare())


def fused_mini(seed=0):
    from cbwear.encoders import build_accel_resnet, build_eda_autoencoder, build_temp_cnn
    from cbwear.fusion import ConcatMLPFusion, FusionConfig

    r = np.random.default_rng(seed)
    encs = {
        "accel": build_accel_resnet(r, stem_ch=4, block_ch=(4, 4, 6, 6)),
        "eda": build_eda_autoencoder(r, channels=(2, 3, 4), in_len=150)[0],
        "temp": build_temp_cnn(r, channels=(3, 4, 5)),
    }
    cfg = FusionConfig(mlp_hidden=16, mlp_layers=2, num_classes=2)
    return ConcatMLPFusion(encs, cfg, r)


def test_modality_shapley_efficiency_on_model():
    model = fused_mini()
    rng = np.random.default_rng(5)
    X = rng.standard_normal((1, 150, 5)).astype(np.float32)
    baselines = [np.zeros(6, np.float32), np.zeros(4, np.float32), np.zeros(5, np.float32)]
    att = modality_shapley(model, X, baselines)
    assert att.efficiency_gap <= 1e-9


def test_modality_shapley_dummy_modalities_with_zeroed_weights():
    model = fused_mini(seed=2)
    # zero the MLP input weights for the EDA and temp slices of the concat
    first = model.mlp.layers[0]
    d_acc = model.encoders["accel"].d_m
    first.W.value[d_acc:, :] = 0.0
    rng = np.random.default_rng(6)
    X = rng.standard_normal((1, 150, 5)).astype(np.float32)
    baselines = [np.full(6, 0.1, np.float32), np.full(4, 0.1, np.float32),
                 np.full(5, 0.1, np.float32)]
    att = modality_shapley(model, X, baselines)
    assert att.phi[1] == pytest.approx(0.0, abs=1e-12)
    assert att.phi[2] == pytest.approx(0.0, abs=1e-12)


def test_modality_shapley_symmetric_embeddings_get_equal_phi():
    model = fused_mini(seed=3)
    d = model.encoders["accel"].d_m

    # symmetric value function built directly over coalition indicators
    def v(s):
        return 0.7 * ((0 in s) + (1 in s)) + 0.05 * (2 in s)

    phi = shapley_exact(v)
    assert phi[0] == pytest.approx(phi[1], abs=1e-15)
