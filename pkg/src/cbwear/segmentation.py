"""Sliding-window segmentation and detection/prediction label assignment.

A window covers samples [k*stride, k*stride + window) of a preprocessed
session. Its feature channels come from that span; its label is drawn from
the look-ahead interval [start + H, start + H + window_s), so H = 0
reproduces concurrent detection. Windows whose look-ahead extends past the
session end are dropped.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .data import SAMPLE_RATE_HZ, TopBin
from .errors import RecordingTooShort

WINDOW_SAMPLES = 150
STRIDE_SAMPLES = 30


class ClassLabel(enum.IntEnum):
    NONE = 0
    AGGRESSION = 1
    SIB = 2
    STEREOTYPY = 3


TOP_TO_CLASS = {
    TopBin.AGGRESSION: ClassLabel.AGGRESSION,
    TopBin.SIB: ClassLabel.SIB,
    TopBin.STEREOTYPY: ClassLabel.STEREOTYPY,
}

# Highest clinical risk wins when several behavior types overlap one window.
DEFAULT_CLASS_PRIORITY = (ClassLabel.AGGRESSION, ClassLabel.SIB, ClassLabel.STEREOTYPY)


class Task(enum.Enum):
    BINARY = "binary"
    FOUR_CLASS = "four_class"
    THREE_CLASS_RISK = "three_class_risk"

    @property
    def n_classes(self) -> int:
        return {Task.BINARY: 2, Task.FOUR_CLASS: 4, Task.THREE_CLASS_RISK: 3}[self]


@dataclass(frozen=True)
class LabelSpec:
    horizon_s: float = 0.0
    task: Task = Task.BINARY
    class_priority: tuple = DEFAULT_CLASS_PRIORITY

    def __post_init__(self):
        if not 0.0 <= self.horizon_s <= 1800.0:
            raise ValueError("horizon must lie in [0, 1800] s")


@dataclass
class Window:
    subject_id: str
    session_id: str
    start_s: float
    channels: np.ndarray  # (150, 5): acc_x, acc_y, acc_z, tonic_eda, temp
    label_binary: int = 0
    label_class: ClassLabel = ClassLabel.NONE
    horizon_s: float = 0.0

    @property
    def length_samples(self) -> int:
        return self.channels.shape[0]


@dataclass(frozen=True)
class LabeledEvent:
    """An annotation interval already mapped to its top bin."""

    top: TopBin
    start_s: float
    end_s: float


@dataclass
class SegmentResult:
    windows: list[Window]
    n_rejected_flat: int = 0


def gated_starts(channels: np.ndarray, window: int = WINDOW_SAMPLES,
                 stride: int = STRIDE_SAMPLES, gate_std_uS: float = 0.0):
    """Window start samples kept by the tonic-EDA flatline gate.

    Returns (starts, n_rejected). Count before gating is
    floor((L - window) / stride) + 1.
    """
    L = channels.shape[0]
    if L < window:
        raise RecordingTooShort(f"session of {L} samples is shorter than one window ({window})")
    n = (L - window) // stride + 1
    starts = np.arange(n, dtype=np.int64) * stride
    if gate_std_uS > 0.0:
        tonic = np.asarray(channels[:, 3], dtype=np.float64)
        keep = np.array([tonic[s:s + window].std() >= gate_std_uS for s in starts])
        return starts[keep], int(n - keep.sum())
    return starts, 0


def segment(channels: np.ndarray, subject_id: str, session_id: str,
            window: int = WINDOW_SAMPLES, stride: int = STRIDE_SAMPLES,
            gate_std_uS: float = 0.0, sample_rate: int = SAMPLE_RATE_HZ) -> SegmentResult:
    """Slice a preprocessed session (L, 5) into unlabeled windows.

    The window-level EDA gate drops windows whose tonic slice (channel 3)
    has std below gate_std_uS; dropped windows are counted, not returned.
    """
    starts, rejected = gated_starts(channels, window, stride, gate_std_uS)
    out = [Window(subject_id, session_id, start_s=s / sample_rate,
                  channels=channels[s:s + window]) for s in starts]
    return SegmentResult(windows=out, n_rejected_flat=rejected)


def _overlaps(a0: float, a1: float, b0: float, b1: float) -> bool:
    """Half-open interval overlap [a0, a1) vs [b0, b1)."""
    return a0 < b1 and b0 < a1


def assign_labels(windows: list[Window], events: list[LabeledEvent], spec: LabelSpec,
                  session_duration_s: float | None = None,
                  window_s: float = WINDOW_SAMPLES / SAMPLE_RATE_HZ) -> list[Window]:
    """Label windows from the horizon-shifted look-ahead interval.

    A window at [s, s+5) gets label 1 iff some event overlaps [s+H, s+H+5).
    With several overlapping behavior classes, the first match in
    spec.class_priority wins. Windows whose look-ahead crosses the session
    end are dropped (only possible for H > 0 when the duration is known).
    """
    H = spec.horizon_s
    out = []
    for w in windows:
        la0 = w.start_s + H
        la1 = la0 + window_s
        if session_duration_s is not None and la1 > session_duration_s + 1e-9:
            continue
        hit = [e.top for e in events if _overlaps(la0, la1, e.start_s, e.end_s)]
        if hit:
            classes = {TOP_TO_CLASS[t] for t in hit}
            label = next(c for c in spec.class_priority if c in classes)
            binary = 1
        else:
            label = ClassLabel.NONE
            binary = 0
        out.append(Window(w.subject_id, w.session_id, w.start_s, w.channels,
                          label_binary=binary, label_class=label, horizon_s=H))
    return out


def label_starts(starts: np.ndarray, events: list[LabeledEvent], spec: LabelSpec,
                 duration_s: float, window_s: float = WINDOW_SAMPLES / SAMPLE_RATE_HZ,
                 sample_rate: int = SAMPLE_RATE_HZ):
    """Index-based variant of assign_labels over window start samples.

    Returns (kept_starts, y_class) where y_class holds ClassLabel values and
    windows whose look-ahead crosses the session end are dropped.
    """
    H = spec.horizon_s
    start_s = np.asarray(starts, dtype=np.float64) / sample_rate
    keep = start_s + H + window_s <= duration_s + 1e-9
    kept = np.asarray(starts)[keep]
    la0 = start_s[keep] + H
    la1 = la0 + window_s
    y = np.zeros(kept.size, dtype=np.int64)
    hit_sets = [set() for _ in range(kept.size)]
    for e in events:
        mask = (la0 < e.end_s) & (e.start_s < la1)
        cls = TOP_TO_CLASS[e.top]
        for i in np.flatnonzero(mask):
            hit_sets[i].add(cls)
    for i, hs in enumerate(hit_sets):
        if hs:
            y[i] = next(c for c in spec.class_priority if c in hs)
    return kept, y


def task_targets(labels_class: np.ndarray, task: Task) -> np.ndarray:
    """Map 4-way class labels to the target indices of a task.

    Binary: 0/1. Four-class: None, Aggression, SIB, Stereotypy. Three-class
    risk grouping merges Aggression and SIB into one high-risk class:
    0 = None, 1 = HighRisk, 2 = Stereotypy.
    """
    c = np.asarray(labels_class, dtype=np.int64)
    if task is Task.BINARY:
        return (c != ClassLabel.NONE).astype(np.int64)
    if task is Task.FOUR_CLASS:
        return c
    merged = np.zeros_like(c)
    merged[(c == ClassLabel.AGGRESSION) | (c == ClassLabel.SIB)] = 1
    merged[c == ClassLabel.STEREOTYPY] = 2
    return merged


TASK_CLASS_NAMES = {
    Task.BINARY: ["None", "Behavior"],
    Task.FOUR_CLASS: ["None", "Aggression", "SIB", "Stereotypy"],
    Task.THREE_CLASS_RISK: ["None", "HighRisk", "Stereotypy"],
}
