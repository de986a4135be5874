"""Fusion head contracts: shapes, invariances, and joint gradient checks."""

import numpy as np
import pytest

from cbwear.encoders import (
    build_accel_resnet,
    build_accel_transformer,
    build_deepconvlstm,
    build_eda_autoencoder,
    build_temp_cnn,
)
from cbwear.fusion import (
    ConcatMLPFusion,
    CrossModalViTFusion,
    FusionConfig,
    FusionKind,
    TemporalViTFusion,
    UnimodalClassifier,
    build_fusion,
)
from cbwear.nn import model_backward, model_forward
from cbwear.nn.gradcheck import check_gradients
from cbwear.nn.layers import MultiHeadSelfAttention


def rng(seed=0):
    return np.random.default_rng(seed)


def full_encoders(seed=0):
    r = rng(seed)
    return {
        "accel": build_accel_resnet(r),
        "eda": build_eda_autoencoder(r)[0],
        "temp": build_temp_cnn(r),
    }


def inputs(batch=2, L=150, seed=1, dtype=np.float32):
    r = rng(seed)
    return (r.standard_normal((batch, L, 3)).astype(dtype),
            r.standard_normal((batch, L, 1)).astype(dtype),
            r.standard_normal((batch, L, 1)).astype(dtype))


def test_concat_dimension_is_256():
    m = ConcatMLPFusion(full_encoders(), FusionConfig(num_classes=2), rng(2))
    assert m.concat_dim == 128 + 64 + 64
    logits, _ = m.forward(inputs(), mode="infer")
    assert logits.shape == (2, 2)


def test_concat_zeroed_weights_give_constant_logits():
    m = ConcatMLPFusion(full_encoders(), FusionConfig(num_classes=2), rng(2))
    for p in m.mlp.params():
        p.value[...] = 0.0
    a, _ = m.forward(inputs(seed=3), mode="infer")
    b, _ = m.forward(inputs(seed=4), mode="infer")
    np.testing.assert_array_equal(a, b)


def test_concat_invariant_to_sequence_permutation_before_pooling():
    # mean pooling destroys temporal order of the encoder sequences
    m = ConcatMLPFusion(full_encoders(), FusionConfig(num_classes=2), rng(2))
    embs = m.modality_embeddings(inputs(seed=5))
    seqs = [m.encoders[k].trunk.forward(x, "infer")[0]
            for k, x in zip(("accel", "eda", "temp"), inputs(seed=5))]
    perm_embs = []
    r = rng(6)
    for s in seqs:
        p = r.permutation(s.shape[1])
        perm_embs.append(s[:, p].mean(axis=1))
    base = m.logits_from_embeddings(embs)
    permuted = m.logits_from_embeddings(perm_embs)
    np.testing.assert_allclose(base, permuted, atol=1e-4)


@pytest.mark.parametrize("n_classes", [2, 3, 4])
def test_all_heads_emit_batch_by_C(n_classes):
    encs = full_encoders()
    for kind in FusionKind:
        cfg = FusionConfig(kind=kind, num_classes=n_classes)
        m = build_fusion(encs, cfg, rng(3))
        logits, _ = m.forward(inputs(), mode="infer")
        assert logits.shape == (2, n_classes)


def test_tvit_stacked_width_and_patch_count():
    encs = full_encoders()
    cfg = FusionConfig(kind=FusionKind.TEMPORAL_VIT)
    m = TemporalViTFusion(encs, cfg, rng(4))
    embs = m.modality_embeddings(inputs())
    assert all(e.shape == (2, cfg.fused_seq_len, cfg.dim) for e in embs)
    joined = m._join(embs)
    assert joined.shape == (2, cfg.fused_seq_len, 3 * cfg.dim)
    m.logits_from_embeddings(embs)
    att = m.vit.attention_layers()[0].last_attention
    assert att.shape[-1] == cfg.fused_seq_len // cfg.patch_len + 1  # patches + cls


def test_xvit_fused_length_is_3T():
    encs = full_encoders()
    cfg = FusionConfig(kind=FusionKind.CROSSMODAL_VIT)
    m = CrossModalViTFusion(encs, cfg, rng(5))
    embs = m.modality_embeddings(inputs())
    joined = m._join(embs)
    assert joined.shape == (2, 3 * cfg.fused_seq_len, cfg.dim)
    m.logits_from_embeddings(embs)
    att = m.vit.attention_layers()[0].last_attention
    assert att.shape[-1] == 3 * cfg.fused_seq_len // cfg.patch_len + 1


def test_xvit_modality_order_changes_outputs_but_rows_normalize():
    encs = full_encoders()
    cfg = FusionConfig(kind=FusionKind.CROSSMODAL_VIT)
    m = CrossModalViTFusion(encs, cfg, rng(6))
    embs = m.modality_embeddings(inputs(seed=7))
    base = m.logits_from_embeddings(embs)
    swapped = m.logits_from_embeddings([embs[1], embs[0], embs[2]])
    # outputs may differ (positional encodings move); attention stays normalized
    for att_layer in m.vit.attention_layers():
        np.testing.assert_allclose(att_layer.last_attention.sum(axis=-1), 1.0, atol=1e-5)
    assert base.shape == swapped.shape


def test_vit_depth_zero_is_constant_in_inputs():
    encs = full_encoders()
    cfg = FusionConfig(kind=FusionKind.TEMPORAL_VIT, depth=0)
    m = TemporalViTFusion(encs, cfg, rng(7))
    a, _ = m.forward(inputs(seed=8), mode="infer")
    b, _ = m.forward(inputs(seed=9), mode="infer")
    np.testing.assert_array_equal(a, b)


def test_cls_token_gradient_nonzero():
    encs = full_encoders()
    cfg = FusionConfig(kind=FusionKind.TEMPORAL_VIT)
    m = TemporalViTFusion(encs, cfg, rng(8))
    logits, tape = model_forward(m, inputs(seed=10))
    dy = np.zeros_like(logits)
    dy[:, 0] = 1.0
    model_backward(tape, dy)
    cls = [p for p in m.params() if p.name.endswith("cls.tok")][0]
    assert np.abs(cls.grad).max() > 0


def test_patch_len_config_flexibility():
    encs = full_encoders()
    cfg = FusionConfig(kind=FusionKind.CROSSMODAL_VIT, fused_seq_len=44, patch_len=11)
    m = CrossModalViTFusion(encs, cfg, rng(9))
    logits, _ = m.forward(inputs(), mode="infer")
    assert logits.shape == (2, 2)
    with pytest.raises(ValueError):
        FusionConfig(fused_seq_len=50, patch_len=7)


def mini_encoders(arch, seed=0):
    r = rng(seed)
    accel = {
        "resnet": lambda: build_accel_resnet(r, dtype=np.float64, stem_ch=4, block_ch=(4, 4, 6, 6)),
        "dclstm": lambda: build_deepconvlstm(r, dtype=np.float64, conv_ch=5, n_convs=3, lstm_hidden=6),
        "transformer": lambda: build_accel_transformer(r, dtype=np.float64, patch_len=15,
                                                       dim=8, depth=1, heads=2, mlp_dim=12),
    }[arch]()
    eda, _ = build_eda_autoencoder(r, dtype=np.float64, channels=(2, 3, 4), in_len=60)
    temp = build_temp_cnn(r, dtype=np.float64, channels=(3, 4, 5))
    return {"accel": accel, "eda": eda, "temp": temp}


MINI_CFG = dict(dim=8, depth=1, heads=2, mlp_dim=12, patch_len=5, fused_seq_len=10,
                mlp_hidden=12, mlp_layers=3, num_classes=2)


@pytest.mark.parametrize("arch", ["resnet", "dclstm", "transformer"])
@pytest.mark.parametrize("kind", list(FusionKind), ids=[k.value for k in FusionKind])
def test_fused_model_gradcheck_miniature(arch, kind):
    encs = mini_encoders(arch, seed=11)
    cfg = FusionConfig(kind=kind, **MINI_CFG)
    m = build_fusion(encs, cfg, rng(12), dtype=np.float64)
    x = inputs(batch=2, L=60, seed=13, dtype=np.float64)
    check_gradients(m, x, seed=3, n_param_coords=2, max_total_coords=36, tol=1e-4)


def test_unimodal_classifier_forward_backward():
    enc = mini_encoders("resnet", seed=14)["accel"]
    clf = UnimodalClassifier(enc, 2, rng(15), dtype=np.float64)
    x = rng(16).standard_normal((3, 60, 3))
    check_gradients(clf, x, seed=4, n_param_coords=2, max_total_coords=30, tol=1e-4)
