"""Balanced-batch training, nested-CV protocol evaluation, and the
prediction-horizon sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .encoders import (
    build_accel_encoder,
    build_eda_autoencoder,
    build_temp_cnn,
    pretrain_autoencoder,
)
from .errors import DivergedLoss, MissingClassInTrain, NoPositives, SingleClass
from .fusion import FusionConfig, FusionKind, UnimodalClassifier, build_fusion
from .metrics import (
    auc_roc,
    auc_roc_ovr_macro,
    confusion_matrix,
    mean_ci95,
    prf_from_predictions,
    prf_metrics,
)
from .nn.core import INFER, TRAIN, model_backward, model_forward, restore_state, rng_for, snapshot_state
from .nn.losses import cross_entropy
from .nn.optim import Adam
from .pipeline import Normalizer, SessionData, WindowDataset, build_dataset, modality_inputs
from .protocol import balanced_batches, nested_cv_splits
from .segmentation import LabelSpec, Task

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    modality: str = "fused"   # fused | accel | eda | temp
    arch: str = "resnet"      # accelerometer encoder: resnet | dclstm | transformer
    fusion: str = "concat"    # concat | tvit | xvit
    vit_dim: int = 128
    vit_depth: int = 2
    vit_heads: int = 4
    vit_mlp_dim: int = 256
    patch_len: int = 10
    fused_seq_len: int = 50
    mlp_hidden: int = 256
    mlp_layers: int = 3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    base_lr: float = 1e-4
    backbone_lr: float = 1e-5
    weight_decay: float = 1e-5
    label_ratio: float = 1.5
    seed: int = 0
    runs: int = 5
    folds: int = 5
    max_batches_per_epoch: int = 0
    eval_batch_size: int = 256
    pretrain_eda_epochs: int = 0
    val_subsample: int = 0  # cap validation windows per epoch (0 = all)

    def lr_map(self) -> dict:
        # pretrained-style backbones run slower than fresh heads
        return {"accel": self.backbone_lr, "eda": self.backbone_lr,
                "temp": self.base_lr, "head": self.base_lr}


def build_model(mc: ModelConfig, num_classes: int, rng):
    """Instantiate the configured model. Returns (model, eda_decoder) where
    the decoder is present only when an EDA encoder is in the model (it is
    needed for reconstruction pretraining)."""
    if mc.modality == "fused":
        eda_enc, eda_dec = build_eda_autoencoder(rng)
        encoders = {
            "accel": build_accel_encoder(mc.arch, rng),
            "eda": eda_enc,
            "temp": build_temp_cnn(rng),
        }
        cfg = FusionConfig(kind=FusionKind(mc.fusion), dim=mc.vit_dim, depth=mc.vit_depth,
                           heads=mc.vit_heads, mlp_dim=mc.vit_mlp_dim, patch_len=mc.patch_len,
                           fused_seq_len=mc.fused_seq_len, mlp_hidden=mc.mlp_hidden,
                           mlp_layers=mc.mlp_layers, num_classes=num_classes)
        return build_fusion(encoders, cfg, rng), eda_dec
    if mc.modality == "accel":
        return UnimodalClassifier(build_accel_encoder(mc.arch, rng), num_classes, rng), None
    if mc.modality == "eda":
        enc, dec = build_eda_autoencoder(rng)
        return UnimodalClassifier(enc, num_classes, rng), dec
    if mc.modality == "temp":
        return UnimodalClassifier(build_temp_cnn(rng), num_classes, rng), None
    raise ValueError(f"unknown modality {mc.modality!r}")


def predict_probs(model, dataset: WindowDataset, idx, normalizer: Normalizer,
                  modality: str, batch_size: int = 256) -> np.ndarray:
    idx = np.asarray(idx)
    out = []
    for s in range(0, idx.size, batch_size):
        X = normalizer.apply(dataset.gather(idx[s:s + batch_size]))
        logits, _ = model.forward(modality_inputs(X, modality), INFER)
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        out.append(e / e.sum(axis=1, keepdims=True))
    return np.concatenate(out) if out else np.zeros((0, 2))


def _val_auc(probs: np.ndarray, y: np.ndarray, task: Task) -> float:
    """AUC of a probability table; nan when only one class is present
    (long-horizon folds can run out of positive windows)."""
    try:
        if task is Task.BINARY:
            return auc_roc(probs[:, 1], y)
        return auc_roc_ovr_macro(probs, y, task.n_classes)
    except SingleClass:
        return float("nan")


@dataclass
class FoldResult:
    run_id: int
    fold_id: int
    horizon_s: float
    task: Task
    auc: float
    precision: float
    recall: float
    f1_macro: float
    best_epoch: int
    curves: list  # (epoch, train_loss, val_auc)
    test_subjects: np.ndarray
    test_sessions: list
    test_starts: np.ndarray
    test_y: np.ndarray
    test_probs: np.ndarray
    confusion: np.ndarray
    model: object
    normalizer: Normalizer
    split: object


def train_fold(dataset: WindowDataset, split, task: Task, mc: ModelConfig,
               tc: TrainConfig) -> FoldResult:
    """Train on one nested-CV split, select the best-validation-AUC epoch,
    and evaluate on the held-out subjects."""
    y = dataset.targets(task)
    subs = dataset.subjects
    train_idx = np.flatnonzero(np.isin(subs, split.train_subjects))
    val_idx = np.flatnonzero(np.isin(subs, split.val_subjects))
    test_idx = np.flatnonzero(np.isin(subs, split.test_subjects))
    if tc.val_subsample and val_idx.size > tc.val_subsample:
        # uniform subsample keeps the natural class distribution in expectation
        pick = rng_for(tc.seed, "valsub", split.run_id, split.fold_id).choice(
            val_idx.size, size=tc.val_subsample, replace=False)
        val_idx = val_idx[np.sort(pick)]
    assert not (set(split.train_subjects) & set(split.test_subjects))
    assert not (set(split.train_subjects) & set(split.val_subjects))
    assert not (set(split.val_subjects) & set(split.test_subjects))

    present = set(np.unique(y[train_idx]).tolist())
    if task is not Task.BINARY and present != set(range(task.n_classes)):
        raise MissingClassInTrain(
            f"run {split.run_id} fold {split.fold_id}: train classes {sorted(present)}")

    run, fold = split.run_id, split.fold_id
    normalizer = Normalizer.fit(dataset.sessions, split.train_subjects,
                                fold_tag=f"run{run}_fold{fold}")
    model, eda_dec = build_model(mc, task.n_classes, rng_for(tc.seed, "init", run, fold))

    if tc.pretrain_eda_epochs and eda_dec is not None:
        enc = model.encoders["eda"] if mc.modality == "fused" else model.encoder
        sample = train_idx[rng_for(tc.seed, "pre", run, fold).permutation(train_idx.size)][:512]
        tonic = normalizer.apply(dataset.gather(sample))[:, :, 3:4]
        pretrain_autoencoder(enc, eda_dec, tonic, tc.pretrain_eda_epochs,
                             seed=int(rng_for(tc.seed, "preseed", run, fold).integers(2 ** 31)))

    opt = Adam(model.params(), lr=tc.lr_map(), weight_decay=tc.weight_decay)
    y_train = y[train_idx]
    best = (-np.inf, -1, None)
    curves = []
    for epoch in range(tc.epochs):
        epoch_seed = int(rng_for(tc.seed, "epoch", run, fold, epoch).integers(2 ** 31))
        drop_rng = rng_for(tc.seed, "drop", run, fold, epoch)
        losses = []
        for batch in balanced_batches(y_train, tc.batch_size, tc.label_ratio,
                                      seed=epoch_seed, max_batches=tc.max_batches_per_epoch):
            bidx = train_idx[batch]
            X = normalizer.apply(dataset.gather(bidx))
            logits, tape = model_forward(model, modality_inputs(X, mc.modality), TRAIN, drop_rng)
            loss, dlogits, _ = cross_entropy(logits, y[bidx])
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch}")
            model_backward(tape, dlogits)
            opt.step()
            opt.zero_grad()
            losses.append(loss)
        val_probs = predict_probs(model, dataset, val_idx, normalizer, mc.modality,
                                  tc.eval_batch_size)
        val_auc = _val_auc(val_probs, y[val_idx], task)
        curves.append((epoch, float(np.mean(losses)), float(val_auc)))
        if val_auc > best[0]:
            best = (val_auc, epoch, snapshot_state(model))
    if best[2] is not None:
        restore_state(model, best[2])

    test_probs = predict_probs(model, dataset, test_idx, normalizer, mc.modality,
                               tc.eval_batch_size)
    y_test = y[test_idx]
    auc = _val_auc(test_probs, y_test, task)
    if task is Task.BINARY:
        precision, recall, f1 = prf_metrics(test_probs[:, 1], y_test)
        pred = (test_probs[:, 1] >= 0.5).astype(int)
    else:
        pred = test_probs.argmax(axis=1)
        precision, recall, f1 = prf_from_predictions(pred, y_test, task.n_classes)
    cm = confusion_matrix(pred, y_test, task.n_classes)

    return FoldResult(
        run_id=run, fold_id=fold, horizon_s=dataset.horizon_s, task=task,
        auc=float(auc), precision=float(precision), recall=float(recall),
        f1_macro=float(f1), best_epoch=best[1], curves=curves,
        test_subjects=subs[test_idx], test_sessions=dataset.session_ids(test_idx),
        test_starts=dataset.start[test_idx], test_y=y_test, test_probs=test_probs,
        confusion=cm, model=model, normalizer=normalizer, split=split,
    )


@dataclass
class ProtocolResult:
    task: Task
    horizon_s: float
    folds: list[FoldResult]
    skipped: list  # (run, fold, reason)
    splits: list

    def metric_rows(self):
        return [(f.run_id, f.fold_id, self.horizon_s, self.task.value,
                 f.auc, f.precision, f.recall, f.f1_macro) for f in self.folds]

    def aggregate(self) -> dict:
        out = {}
        for name in ("auc", "precision", "recall", "f1_macro"):
            vals = [getattr(f, name) for f in self.folds]
            m, ci = mean_ci95(vals)
            out[name] = {"mean": m, "ci95": ci, "n": len(vals)}
        return out

    def pooled_confusion(self) -> np.ndarray:
        return np.sum([f.confusion for f in self.folds], axis=0)

    def per_subject(self) -> dict:
        """Pooled test predictions per subject across runs; AUC needs both
        classes for that subject, otherwise it is reported as nan."""
        table: dict[str, dict] = {}
        scores, ys = {}, {}
        for f in self.folds:
            # any-behavior score: positive prob when binary, 1 - P(None) otherwise
            s = f.test_probs[:, 1] if self.task is Task.BINARY else 1.0 - f.test_probs[:, 0]
            for subj in np.unique(f.test_subjects):
                m = f.test_subjects == subj
                scores.setdefault(subj, []).append(s[m])
                ys.setdefault(subj, []).append((f.test_y[m] if self.task is Task.BINARY
                                                else (f.test_y[m] != 0).astype(int)))
        for subj in sorted(scores):
            sc = np.concatenate(scores[subj])
            yy = np.concatenate(ys[subj])
            if 0 < yy.sum() < yy.size:
                table[subj] = {"auc": auc_roc(sc, yy), "n_windows": int(yy.size),
                               "n_positive": int(yy.sum())}
            else:
                table[subj] = {"auc": float("nan"), "n_windows": int(yy.size),
                               "n_positive": int(yy.sum())}
        return table


def evaluate_protocol(sessions: list[SessionData], task: Task, horizon_s: float,
                      mc: ModelConfig, tc: TrainConfig, class_priority=None,
                      keep_models: bool = False) -> ProtocolResult:
    """Full runs x folds nested-CV evaluation at one horizon.

    The four-class task uses four folds; folds whose training subjects miss
    a class are logged and skipped. Trained models are dropped unless
    keep_models is set (25 of them add up).
    """
    spec = LabelSpec(horizon_s=horizon_s, task=task) if class_priority is None else \
        LabelSpec(horizon_s=horizon_s, task=task, class_priority=class_priority)
    dataset = build_dataset(sessions, horizon_s, spec)
    subjects = sorted({s.subject_id for s in sessions})
    folds = 4 if task is Task.FOUR_CLASS else tc.folds
    splits = nested_cv_splits(subjects, folds=folds, runs=tc.runs, seed=tc.seed)
    results, skipped = [], []
    for split in splits:
        try:
            fr = train_fold(dataset, split, task, mc, tc)
        except (MissingClassInTrain, NoPositives) as e:
            log.warning("skipping fold: %s", e)
            skipped.append((split.run_id, split.fold_id, str(e)))
            continue
        if not keep_models:
            fr.model = None
            fr.normalizer = None
        results.append(fr)
    return ProtocolResult(task=task, horizon_s=horizon_s, folds=results,
                          skipped=skipped, splits=splits)


def horizon_sweep(sessions: list[SessionData], task: Task, horizons,
                  mc: ModelConfig, tc: TrainConfig) -> list[ProtocolResult]:
    """One full nested-CV evaluation per horizon; labels are regenerated per
    horizon by evaluate_protocol."""
    return [evaluate_protocol(sessions, task, float(h), mc, tc) for h in horizons]
