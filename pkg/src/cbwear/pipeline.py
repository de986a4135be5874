"""Dataset assembly: screened sessions to labeled window datasets.

Sessions are stored once as (L, 5) float32 channel arrays (raw-unit accel
and temperature, tonic EDA); windows are kept as (session, start) indices
and gathered into batch tensors on demand. Min-max normalization is fitted
per fold from the training subjects' sessions and applied at gather time,
which keeps the train-fold-only contract without duplicating window data
per fold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import (
    BehaviorTaxonomy,
    DatasetManifest,
    QualityReport,
    Recording,
    load_annotations,
    load_recording,
    map_behavior,
    screen_session,
)
from .preprocess import DEFAULT_EDA_LAMBDA, NormStats, eda_decompose, minmax_apply, minmax_fit
from .segmentation import (
    ClassLabel,
    LabeledEvent,
    LabelSpec,
    Task,
    WINDOW_SAMPLES,
    gated_starts,
    label_starts,
)

CH_ACC = (0, 1, 2)
CH_TONIC = 3
CH_TEMP = 4
NORM_CHANNEL_INDEX = {"acc_x": 0, "acc_y": 1, "acc_z": 2, "temp": 4}


@dataclass
class SessionData:
    subject_id: str
    session_id: str
    channels: np.ndarray  # (L, 5) float32
    events: list[LabeledEvent]
    duration_s: float
    starts: np.ndarray
    n_rejected_flat: int


def preprocess_recording(rec: Recording, events: list[LabeledEvent],
                         eda_lambda: float = DEFAULT_EDA_LAMBDA,
                         gate_std_uS: float = 0.01) -> SessionData:
    tonic = eda_decompose(rec.eda, eda_lambda).tonic
    channels = np.empty((rec.n_samples, 5), dtype=np.float32)
    channels[:, 0:3] = rec.accel
    channels[:, CH_TONIC] = tonic
    channels[:, CH_TEMP] = rec.temp
    starts, rejected = gated_starts(channels, gate_std_uS=gate_std_uS)
    return SessionData(rec.subject_id, rec.session_id, channels, list(events),
                       rec.duration_s, starts, rejected)


def ingest_manifest(manifest: DatasetManifest, taxonomy: BehaviorTaxonomy,
                    flatline_std_uS: float = 0.01, max_dropout_s: float = 5.0):
    """Load, screen, and bin every session; rejected sessions are reported
    but not loaded into the pipeline."""
    accepted: list[tuple[Recording, list[LabeledEvent]]] = []
    reports: list[QualityReport] = []
    for entry in manifest.entries:
        rec = load_recording(entry)
        rep = screen_session(rec, flatline_std_uS, max_dropout_s)
        reports.append(rep)
        if rep.verdict.value != "Accept":
            continue
        events = [LabeledEvent(map_behavior(a.behavior_raw, taxonomy), a.start_s, a.end_s)
                  for a in load_annotations(entry.annotation_path)]
        accepted.append((rec, events))
    return accepted, reports


@dataclass
class WindowDataset:
    """Labeled windows of one horizon, as indices into session stores."""

    sessions: list[SessionData]
    sess_idx: np.ndarray
    start: np.ndarray
    y_class: np.ndarray
    horizon_s: float

    def __len__(self):
        return self.sess_idx.size

    @property
    def subjects(self) -> np.ndarray:
        subs = np.array([s.subject_id for s in self.sessions])
        return subs[self.sess_idx]

    def targets(self, task: Task) -> np.ndarray:
        from .segmentation import task_targets

        return task_targets(self.y_class, task)

    def gather(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        out = np.empty((idx.size, WINDOW_SAMPLES, 5), dtype=np.float32)
        for j, i in enumerate(idx):
            s = self.start[i]
            out[j] = self.sessions[self.sess_idx[i]].channels[s:s + WINDOW_SAMPLES]
        return out

    def start_seconds(self, idx) -> np.ndarray:
        return self.start[np.asarray(idx)] / 30.0

    def session_ids(self, idx) -> list[str]:
        return [self.sessions[self.sess_idx[i]].session_id for i in np.asarray(idx)]


def build_dataset(sessions: list[SessionData], horizon_s: float,
                  spec: LabelSpec | None = None) -> WindowDataset:
    spec = spec or LabelSpec(horizon_s=horizon_s)
    sess_idx, start, y = [], [], []
    for i, sd in enumerate(sessions):
        kept, yc = label_starts(sd.starts, sd.events, spec, sd.duration_s)
        sess_idx.append(np.full(kept.size, i, dtype=np.int64))
        start.append(kept)
        y.append(yc)
    return WindowDataset(
        sessions=sessions,
        sess_idx=np.concatenate(sess_idx) if sess_idx else np.zeros(0, np.int64),
        start=np.concatenate(start) if start else np.zeros(0, np.int64),
        y_class=np.concatenate(y) if y else np.zeros(0, np.int64),
        horizon_s=spec.horizon_s,
    )


@dataclass
class Normalizer:
    """Per-channel min-max stats, fitted on training-fold sessions only."""

    stats: dict[str, NormStats]

    @classmethod
    def fit(cls, sessions: list[SessionData], train_subjects, fold_tag: str = "") -> "Normalizer":
        train = [s for s in sessions if s.subject_id in set(train_subjects)]
        stats = {}
        for name, ch in NORM_CHANNEL_INDEX.items():
            stats[name] = minmax_fit([s.channels[:, ch] for s in train], name, fitted_on=fold_tag)
        return cls(stats)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Normalize a gathered batch in place (accel and temp channels;
        tonic EDA passes through untouched)."""
        for name, ch in NORM_CHANNEL_INDEX.items():
            X[..., ch] = minmax_apply(X[..., ch], self.stats[name])
        return X


def save_sessions(path, sessions: list[SessionData]):
    """Persist preprocessed sessions to one npz store. Events are encoded as
    (class_label, start_s, end_s) rows using the ClassLabel integer of each
    top bin."""
    import json

    from .segmentation import TOP_TO_CLASS

    arrays = {}
    meta = []
    for i, s in enumerate(sessions):
        arrays[f"channels_{i}"] = s.channels
        arrays[f"starts_{i}"] = s.starts
        arrays[f"events_{i}"] = np.array(
            [[float(TOP_TO_CLASS[e.top].value), e.start_s, e.end_s] for e in s.events],
            dtype=np.float64).reshape(-1, 3)
        meta.append({"subject_id": s.subject_id, "session_id": s.session_id,
                     "duration_s": s.duration_s, "n_rejected_flat": s.n_rejected_flat})
    arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_sessions(path) -> list[SessionData]:
    import json

    from .segmentation import TOP_TO_CLASS

    class_to_top = {v.value: k for k, v in TOP_TO_CLASS.items()}
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta_json"]).decode())
        out = []
        for i, m in enumerate(meta):
            events = [LabeledEvent(class_to_top[int(row[0])], float(row[1]), float(row[2]))
                      for row in z[f"events_{i}"]]
            out.append(SessionData(
                subject_id=m["subject_id"], session_id=m["session_id"],
                channels=z[f"channels_{i}"], events=events,
                duration_s=m["duration_s"], starts=z[f"starts_{i}"],
                n_rejected_flat=m["n_rejected_flat"],
            ))
    return out


def modality_inputs(X: np.ndarray, modality: str):
    """Split a (B, 150, 5) window tensor into model inputs."""
    if modality == "fused":
        return (X[:, :, 0:3], X[:, :, 3:4], X[:, :, 4:5])
    if modality == "accel":
        return X[:, :, 0:3]
    if modality == "eda":
        return X[:, :, 3:4]
    if modality == "temp":
        return X[:, :, 4:5]
    raise ValueError(f"unknown modality {modality!r}")
