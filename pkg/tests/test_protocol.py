"""Nested CV split contracts and balanced batch composition."""

import numpy as np
import pytest

from cbwear.errors import NoNegatives, NoPositives, TooFewSubjects
from cbwear.protocol import FoldSplit, balanced_batches, batch_composition, nested_cv_splits

NINE = [f"S{i:02d}" for i in range(1, 10)]


def test_ten_subjects_two_per_test_fold():
    splits = nested_cv_splits([f"P{i}" for i in range(10)], folds=5, runs=1, seed=0)
    assert all(len(s.test_subjects) == 2 for s in splits)


def test_nine_subjects_fold_sizes():
    splits = nested_cv_splits(NINE, folds=5, runs=1, seed=0)
    sizes = sorted(len(s.test_subjects) for s in splits)
    assert sizes == [1, 2, 2, 2, 2]


def test_25_splits_subject_disjoint_and_cover():
    splits = nested_cv_splits(NINE, folds=5, runs=5, seed=7)
    assert len(splits) == 25
    for s in splits:
        tr, va, te = set(s.train_subjects), set(s.val_subjects), set(s.test_subjects)
        assert not (tr & va) and not (tr & te) and not (va & te)
        assert tr | va | te == set(NINE)
    # each subject is tested exactly once per run
    for run in range(5):
        tested = [sub for s in splits if s.run_id == run for sub in s.test_subjects]
        assert sorted(tested) == sorted(NINE)


def test_split_proportions_near_60_20_20():
    splits = nested_cv_splits(NINE, folds=5, runs=5, seed=1)
    for s in splits:
        n = 9
        assert len(s.train_subjects) / n >= 0.5
        assert 1 <= len(s.val_subjects) <= 3
        assert 1 <= len(s.test_subjects) <= 2


def test_disjointness_across_seeds():
    for seed in range(10):
        for s in nested_cv_splits(NINE, folds=5, runs=2, seed=seed):
            assert not set(s.train_subjects) & set(s.test_subjects)
            assert not set(s.train_subjects) & set(s.val_subjects)
            assert not set(s.val_subjects) & set(s.test_subjects)


def test_too_few_subjects():
    with pytest.raises(TooFewSubjects):
        nested_cv_splits(["a", "b"], folds=5)


def test_splits_are_seeded_deterministic():
    a = nested_cv_splits(NINE, folds=5, runs=5, seed=3)
    b = nested_cv_splits(NINE, folds=5, runs=5, seed=3)
    assert a == b
    c = nested_cv_splits(NINE, folds=5, runs=5, seed=4)
    assert a != c


def test_batch_composition_defaults():
    assert batch_composition(64, 1.5) == (26, 38)


def test_every_batch_realizes_26_38():
    rng = np.random.default_rng(0)
    labels = (rng.random(2000) < 0.12).astype(int)
    batches = list(balanced_batches(labels, batch_size=64, ratio=1.5, seed=5))
    assert len(batches) == int(np.ceil(labels.sum() / 26))
    seen_pos = []
    for b in batches:
        assert len(b) == 64
        assert (labels[b] == 1).sum() == 26
        assert (labels[b] == 0).sum() == 38
        seen_pos.extend(b[labels[b] == 1])
    # every positive appears at least once per epoch
    assert set(np.flatnonzero(labels == 1)) <= set(seen_pos)


def test_negatives_recycled_when_exhausted():
    labels = np.array([1] * 40 + [0] * 10)
    batches = list(balanced_batches(labels, batch_size=8, ratio=1.0, seed=0))
    for b in batches:
        assert (labels[b] == 1).sum() == 4
        assert (labels[b] == 0).sum() == 4


def test_no_positives_or_negatives():
    with pytest.raises(NoPositives):
        list(balanced_batches(np.zeros(10, dtype=int)))
    with pytest.raises(NoNegatives):
        list(balanced_batches(np.ones(10, dtype=int)))


def test_max_batches_cap():
    labels = (np.random.default_rng(1).random(5000) < 0.3).astype(int)
    batches = list(balanced_batches(labels, batch_size=64, ratio=1.5, seed=0, max_batches=3))
    assert len(batches) == 3
