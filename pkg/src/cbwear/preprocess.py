"""Channel normalization and EDA tonic/phasic decomposition.

The tonic component t minimizes ||y - t||^2 + lambda * ||D2 t||^2 where D2 is
the second-difference operator; the normal equations (I + lambda D2'D2) t = y
are pentadiagonal and solved exactly with a banded Cholesky factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import EmptyTrainingSet, SequenceTooShort

# Acceleration and temperature are min-max scaled; EDA is decomposed instead.
NORMALIZED_CHANNELS = ("acc_x", "acc_y", "acc_z", "temp")

# Default smoothness weight for the tonic solve at 30 Hz.
DEFAULT_EDA_LAMBDA = 6400.0


@dataclass(frozen=True)
class NormStats:
    """Per-channel min/max, fitted from training-fold data only."""

    channel: str
    min: float
    max: float
    fitted_on: str = ""

    def __post_init__(self):
        if self.max < self.min:
            raise ValueError(f"max < min for channel {self.channel}")


@dataclass(frozen=True)
class TonicPhasic:
    tonic: np.ndarray
    phasic: np.ndarray
    lam: float


def minmax_fit(train_sequences, channel: str, fitted_on: str = "") -> NormStats:
    """Global min/max of `channel` over all training sequences."""
    seqs = [np.asarray(s) for s in train_sequences]
    if not seqs:
        raise EmptyTrainingSet(f"no training data for channel {channel}")
    lo = min(float(s.min()) for s in seqs)
    hi = max(float(s.max()) for s in seqs)
    return NormStats(channel=channel, min=lo, max=hi, fitted_on=fitted_on)


def minmax_apply(x, stats: NormStats):
    """(x - min) / (max - min), clamped to [0, 1]; a degenerate max == min
    channel maps to all zeros."""
    x = np.asarray(x)
    if stats.max == stats.min:
        return np.zeros_like(x, dtype=np.float64)
    y = (x - stats.min) / (stats.max - stats.min)
    return np.clip(y, 0.0, 1.0)


def _second_difference_bands(n: int, lam: float) -> np.ndarray:
    """Upper banded form (3, n) of I + lam * D2'D2 for solveh_banded."""
    d2 = scipy.sparse.diags([1.0, -2.0, 1.0], offsets=[0, 1, 2], shape=(n - 2, n))
    a = scipy.sparse.identity(n) + lam * (d2.T @ d2)
    a = a.tocsr()
    ab = np.zeros((3, n))
    ab[2] = a.diagonal(0)
    ab[1, 1:] = a.diagonal(1)
    ab[0, 2:] = a.diagonal(2)
    return ab


def eda_decompose(eda, lam: float = DEFAULT_EDA_LAMBDA) -> TonicPhasic:
    """Split EDA into a smooth tonic baseline and the phasic remainder.

    Solved in residual form: the phasic p satisfies the same pentadiagonal
    system (I + lam D2'D2) p = lam D2'(D2 y) and tonic = y - p. This keeps
    signals in the null space of D2 (constants, ramps) exact even at huge
    lambda, where solving for the tonic directly loses digits.
    """
    y = np.asarray(eda, dtype=np.float64)
    if y.ndim != 1 or y.size < 3:
        raise SequenceTooShort(f"need at least 3 samples, got shape {y.shape}")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0:
        phasic = np.zeros_like(y)
    else:
        rhs = lam * np.convolve(np.diff(y, n=2), [1.0, -2.0, 1.0], mode="full")
        ab = _second_difference_bands(y.size, lam)
        phasic = scipy.linalg.solveh_banded(ab, rhs, lower=False)
    return TonicPhasic(tonic=y - phasic, phasic=phasic, lam=float(lam))
