"""Handcrafted EDA and temperature features with a KNN classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import KTooLarge

DEFAULT_MIN_PROMINENCE_US = 0.05
DEFAULT_K = 5

EDA_FEATURE_NAMES = ["peak_count", "max_amplitude", "mean", "std"]
TEMP_FEATURE_NAMES = ["mean", "std", "slope"]


@dataclass
class FeatureVector:
    values: np.ndarray
    names: list[str]
    zscored: bool = False

    def __post_init__(self):
        assert len(self.values) == len(self.names)


def detect_peaks(x, min_prominence: float) -> list[int]:
    """Indices of strict local maxima with prominence >= min_prominence.

    Prominence is the peak height above the higher of its two valley bases;
    each base is the minimum between the peak and the nearest strictly
    higher sample (or the sequence edge). Plateau maxima report their
    leftmost index; edge samples are never peaks.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 3:
        return []

    def base(start, step, h):
        # min value walking from start until a strictly higher sample or the edge
        m = np.inf
        k = start
        while 0 <= k < n and x[k] <= h:
            m = min(m, x[k])
            k += step
        return m

    peaks = []
    i = 1
    while i < n - 1:
        if x[i] > x[i - 1]:
            j = i
            while j < n - 1 and x[j + 1] == x[i]:
                j += 1
            if j < n - 1 and x[j + 1] < x[i]:
                h = x[i]
                prominence = h - max(base(i - 1, -1, h), base(j + 1, +1, h))
                if prominence >= min_prominence:
                    peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


def eda_features(tonic_slice) -> FeatureVector:
    """Four tonic-EDA descriptors: peak count, max amplitude, mean, std."""
    x = np.asarray(tonic_slice, dtype=np.float64)
    vals = np.array([
        float(len(detect_peaks(x, DEFAULT_MIN_PROMINENCE_US))),
        float(x.max()),
        float(x.mean()),
        float(x.std()),
    ])
    return FeatureVector(vals, EDA_FEATURE_NAMES)


def ols_slope(x, sample_rate: float = 30.0) -> float:
    """Ordinary-least-squares slope against time, in signal units per second."""
    x = np.asarray(x, dtype=np.float64)
    t = np.arange(x.size) / sample_rate
    tc = t - t.mean()
    denom = float(tc @ tc)
    if denom == 0.0:
        return 0.0
    return float(tc @ (x - x.mean()) / denom)


def temp_features(temp_slice, sample_rate: float = 30.0) -> FeatureVector:
    x = np.asarray(temp_slice, dtype=np.float64)
    vals = np.array([float(x.mean()), float(x.std()), ols_slope(x, sample_rate)])
    return FeatureVector(vals, TEMP_FEATURE_NAMES)


@dataclass
class ZScore:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "ZScore":
        f = np.asarray(features, dtype=np.float64)
        return cls(mean=f.mean(axis=0), std=f.std(axis=0))

    def apply(self, features: np.ndarray) -> np.ndarray:
        f = np.asarray(features, dtype=np.float64)
        out = np.zeros_like(f)
        ok = self.std > 0
        out[:, ok] = (f[:, ok] - self.mean[ok]) / self.std[ok]
        return out


@dataclass
class KnnModel:
    k: int
    train_points: np.ndarray  # (N, d), z-scored
    train_labels: np.ndarray  # (N,)


def knn_fit(features, labels, k: int = DEFAULT_K) -> KnnModel:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if k > features.shape[0]:
        raise KTooLarge(f"k={k} exceeds {features.shape[0]} training points")
    return KnnModel(k=k, train_points=features, train_labels=labels)


def knn_predict(model: KnnModel, x):
    """Majority vote over the k nearest by Euclidean distance.

    Score is the fraction of positive (label 1) neighbors. Vote ties break
    to the single nearest neighbor's label; distance ties break to the
    lower training index (stable sort).
    """
    x = np.asarray(x, dtype=np.float64)
    d = np.linalg.norm(model.train_points - x, axis=1)
    order = np.argsort(d, kind="stable")[:model.k]
    votes = model.train_labels[order]
    counts = np.bincount(votes)
    top = counts.max()
    winners = np.flatnonzero(counts == top)
    label = int(winners[0]) if len(winners) == 1 else int(votes[0])
    score = float(np.mean(votes == 1))
    return label, score
