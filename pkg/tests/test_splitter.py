import numpy as np
import pytest

from core.errors import FoldAssignmentError
from ingestion.splitter import FoldSplitter, split_folds
from models.data import Dataset


def _balanced(n, rng):
    return Dataset(
        time=rng.exponential(size=n) + 0.1,
        status=np.ones(n, dtype=int),
        treatment=np.tile([0, 1], n // 2 + 1)[:n],
        source=np.repeat([0, 1], n // 2 + 1)[:n],
        covariates=rng.standard_normal((n, 2)),
    )


def test_balanced_fold_sizes(rng):
    d = Dataset(
        time=np.ones(100),
        status=np.ones(100, dtype=int),
        treatment=np.tile([0, 1], 50),
        source=np.repeat([0, 1], 50),
        covariates=np.zeros((100, 1)),
    )
    folds = split_folds(d, 5, seed=1)
    assert folds.sizes() == [20] * 5


def test_same_seed_same_assignment(rng):
    d = _balanced(103, rng)
    first = split_folds(d, 5, seed=7)
    second = split_folds(d, 5, seed=7)
    np.testing.assert_array_equal(first.fold_of, second.fold_of)


def test_uneven_sizes_and_stratification(rng):
    d = _balanced(103, rng)
    folds = split_folds(d, 5, seed=3)
    assert set(folds.sizes()) <= {20, 21}
    for cell in np.unique(d.strata):
        counts = np.bincount(folds.fold_of[d.strata == cell], minlength=5)
        assert counts.max() - counts.min() <= 1


def test_partition_covers_every_index(rng):
    d = _balanced(60, rng)
    folds = split_folds(d, 3, seed=0)
    parts = np.concatenate([folds.test_index(k) for k in range(3)])
    np.testing.assert_array_equal(np.sort(parts), np.arange(60))
    np.testing.assert_array_equal(np.sort(np.concatenate([folds.train_index(0), folds.test_index(0)])), np.arange(60))


def test_k_too_large_for_stratum():
    strata = np.array([0] * 10 + [1] * 2)
    with pytest.raises(FoldAssignmentError, match="estrato"):
        FoldSplitter(3, seed=0).assign(strata)


def test_k_must_be_at_least_two():
    with pytest.raises(FoldAssignmentError):
        FoldSplitter(1, seed=0)


def test_single_stratum():
    folds = FoldSplitter(4, seed=2).assign(np.zeros(10))
    assert sorted(folds.sizes()) == [2, 2, 3, 3]
