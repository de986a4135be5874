"""Subject-wise nested cross-validation splits and balanced batch sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoNegatives, NoPositives, TooFewSubjects
from .nn.core import rng_for


@dataclass(frozen=True)
class FoldSplit:
    run_id: int
    fold_id: int
    train_subjects: tuple
    val_subjects: tuple
    test_subjects: tuple

    def __post_init__(self):
        tr, va, te = set(self.train_subjects), set(self.val_subjects), set(self.test_subjects)
        assert not (tr & va or tr & te or va & te), "subject roles must be disjoint"


def nested_cv_splits(subjects, folds: int = 5, runs: int = 5, seed: int = 0) -> list[FoldSplit]:
    """Per run, a seeded subject permutation is cut into `folds` near-equal
    test folds; the remaining subjects split 3:1 into train:val (the
    60/20/20 contract at 5 folds)."""
    subjects = list(subjects)
    if len(subjects) < folds:
        raise TooFewSubjects(f"{len(subjects)} subjects < {folds} folds")
    splits = []
    for run in range(runs):
        rng = rng_for(seed, "cv", run)
        perm = [subjects[i] for i in rng.permutation(len(subjects))]
        fold_sizes = np.full(folds, len(perm) // folds, dtype=int)
        fold_sizes[: len(perm) % folds] += 1
        bounds = np.concatenate([[0], np.cumsum(fold_sizes)])
        for fold in range(folds):
            test = perm[bounds[fold]:bounds[fold + 1]]
            rest = [s for s in perm if s not in test]
            n_val = max(1, round(len(rest) / 4))
            val = rest[:n_val]
            train = rest[n_val:]
            if not train:
                raise TooFewSubjects("not enough subjects to form a train set")
            splits.append(FoldSplit(run, fold, tuple(train), tuple(val), tuple(test)))
    return splits


def batch_composition(batch_size: int = 64, ratio: float = 1.5) -> tuple[int, int]:
    """Positives and negatives per batch: the nearest integer realization of
    a ratio:1 negative:positive mix at the given batch size."""
    n_pos = round(batch_size / (1.0 + ratio))
    return n_pos, batch_size - n_pos


def balanced_batches(labels, batch_size: int = 64, ratio: float = 1.5, seed: int = 0,
                     max_batches: int = 0):
    """Yield index arrays with a fixed positive:negative mix (training only).

    Positives are cycled so each appears at least once per epoch; negatives
    are subsampled without replacement and recycled with replacement once
    exhausted. `labels` nonzero marks a positive window.
    """
    labels = np.asarray(labels)
    pos_idx = np.flatnonzero(labels != 0)
    neg_idx = np.flatnonzero(labels == 0)
    if pos_idx.size == 0:
        raise NoPositives("training fold has no positive windows")
    if neg_idx.size == 0:
        raise NoNegatives("training fold has no negative windows")
    n_pos, n_neg = batch_composition(batch_size, ratio)
    rng = rng_for(seed, "batches")
    n_batches = int(np.ceil(pos_idx.size / n_pos))
    if max_batches:
        n_batches = min(n_batches, max_batches)
    pos_perm = pos_idx[rng.permutation(pos_idx.size)]
    pos_stream = np.resize(pos_perm, n_batches * n_pos)  # cycle to fill the last batch
    neg_perm = neg_idx[rng.permutation(neg_idx.size)]
    neg_cursor = 0
    for b in range(n_batches):
        p = pos_stream[b * n_pos:(b + 1) * n_pos]
        take = []
        need = n_neg
        while need > 0:
            left = neg_perm.size - neg_cursor
            if left == 0:
                take.append(neg_idx[rng.integers(0, neg_idx.size, size=need)])
                need = 0
            else:
                k = min(need, left)
                take.append(neg_perm[neg_cursor:neg_cursor + k])
                neg_cursor += k
                need -= k
        n = np.concatenate(take)
        batch = np.concatenate([p, n])
        assert (labels[batch] != 0).sum() == n_pos and (labels[batch] == 0).sum() == n_neg
        yield rng.permutation(batch)
