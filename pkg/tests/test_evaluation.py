"""Measures, dominance, Pareto ranking and the protocol runners."""
import itertools
import math
import os

import numpy as np
import pytest
from pydantic import ValidationError
from sklearn.datasets import load_iris

from conftest import random_points
from reps.services.dataset import LabeledDataset, concat_datasets, load_ucr_tsv
from reps.services.distance import build_matrix
from reps.services.errors import (
    DatasetMismatch,
    EmptyInput,
    InvalidConfig,
    InvalidK,
    UndefinedLOR,
)
from reps.services.evaluation import (
    EvalRecord,
    beta_sweep,
    dominates,
    fsr_error,
    fsr_table,
    log_odds_ratio,
    make_splits,
    nops_error,
    pareto_rank,
    pareto_ranks_by_dataset,
    reps_error,
    run_folds,
    selection_rate,
)
from reps.services.prototypes import fit_prototypes
from reps.services.settings import RepsConfig


def _rec(err, slr, dataset="d", method="m"):
    return EvalRecord(method=method, dataset=dataset, err=err, slr=slr)


def _blobs(seed=0, n=40, name="blobs"):
    rng = np.random.default_rng(seed)
    points, labels = random_points(rng, n, d=2, classes=2, spread=2.0)
    ds = LabeledDataset(name, "vectors", points, labels)
    return ds, build_matrix(ds)


def test_selection_rate():
    assert selection_rate(10, 10) == 1.0
    assert selection_rate(15, 100) == 0.15
    with pytest.raises(InvalidK):
        selection_rate(0, 10)
    with pytest.raises(InvalidK):
        selection_rate(11, 10)


def test_log_odds_ratio():
    assert log_odds_ratio(0.2, 0.1, 0.1) == pytest.approx(math.log(0.25), abs=1e-12)
    assert log_odds_ratio(0.2, 0.1, 0.1) == pytest.approx(-1.3863, abs=1e-4)
    # O(0.5) = 1 in every slot
    assert log_odds_ratio(0.5, 0.5, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_log_odds_ratio_undefined():
    with pytest.raises(UndefinedLOR):
        log_odds_ratio(0.1, 0.2, 0.1)
    with pytest.raises(UndefinedLOR):
        log_odds_ratio(0.1, 0.2, 0.15)
    with pytest.raises(UndefinedLOR):
        log_odds_ratio(0.2, 1.0, 0.1)
    with pytest.raises(UndefinedLOR):
        log_odds_ratio(0.0, 0.5, 0.0)


def test_dominates_examples():
    assert dominates(_rec(0.1, 0.1), _rec(0.2, 0.2))
    assert not dominates(_rec(0.1, 0.3), _rec(0.2, 0.2))
    assert not dominates(_rec(0.2, 0.2), _rec(0.1, 0.3))
    assert not dominates(_rec(0.1, 0.2), _rec(0.1, 0.2))
    assert dominates(_rec(0.1, 0.2), _rec(0.1, 0.3))


def test_dominates_requires_same_dataset():
    with pytest.raises(DatasetMismatch):
        dominates(_rec(0.1, 0.1, "a"), _rec(0.2, 0.2, "b"))


def test_dominance_order_properties():
    rng = np.random.default_rng(4)
    grid = np.round(np.linspace(0.05, 1.0, 5), 2)
    for _ in range(500):
        a, b, c = (_rec(float(rng.choice(grid)), float(rng.choice(grid))) for _ in range(3))
        assert not dominates(a, a)
        assert not (dominates(a, b) and dominates(b, a))
        if dominates(a, b) and dominates(b, c):
            assert dominates(a, c)


def test_pareto_rank_examples():
    hand = [_rec(0.1, 0.5), _rec(0.2, 0.2), _rec(0.3, 0.1), _rec(0.25, 0.25)]
    assert pareto_rank(hand).ranks == (1, 1, 1, 2)
    assert pareto_rank([_rec(0.4, 0.4)]).ranks == (1,)
    chain = [_rec(0.1, 0.1), _rec(0.2, 0.2), _rec(0.3, 0.3)]
    ranking = pareto_rank(chain)
    assert ranking.ranks == (1, 2, 3)
    assert ranking.fronts == [[0], [1], [2]]
    assert ranking.rank_of(2) == 3


def test_pareto_rank_errors():
    with pytest.raises(EmptyInput):
        pareto_rank([])
    with pytest.raises(DatasetMismatch):
        pareto_rank([_rec(0.1, 0.1, "a"), _rec(0.1, 0.1, "b")])


def _peel(records):
    """Repeatedly remove the non-dominated records."""
    remaining = set(range(len(records)))
    ranks = [0] * len(records)
    depth = 0
    while remaining:
        depth += 1
        front = {i for i in remaining
                 if not any(dominates(records[j], records[i]) for j in remaining if j != i)}
        for i in front:
            ranks[i] = depth
        remaining -= front
    return tuple(ranks)


def test_pareto_rank_matches_peeling_oracle():
    rng = np.random.default_rng(8)
    for _ in range(200):
        size = int(rng.integers(1, 11))
        records = [_rec(float(rng.integers(1, 8)) / 10, float(rng.integers(1, 8)) / 10) for _ in range(size)]
        ranking = pareto_rank(records)
        assert ranking.ranks == _peel(records)
        assert sorted(set(ranking.ranks)) == list(range(1, max(ranking.ranks) + 1))
        for i, j in itertools.permutations(range(size), 2):
            if dominates(records[j], records[i]):
                assert ranking.ranks[j] < ranking.ranks[i]


def test_pareto_ranks_by_dataset():
    records = [_rec(0.1, 0.1, "a"), _rec(0.2, 0.2, "b"), _rec(0.3, 0.3, "a"), _rec(0.1, 0.1, "b")]
    assert pareto_ranks_by_dataset(records) == [1, 2, 2, 1]


def test_eval_record_validation():
    with pytest.raises(ValidationError):
        _rec(1.2, 0.5)
    with pytest.raises(ValidationError):
        _rec(0.2, 0.0)


def test_make_splits():
    ds, _ = _blobs()
    assert len(make_splits(ds, folds=5, seed=0)) == 5
    holdout = make_splits(ds, n_test=10)
    assert len(holdout) == 1
    train, test = holdout[0]
    assert train.tolist() == list(range(30))
    assert test.tolist() == list(range(30, 40))


def test_fsr_at_full_rate_equals_nops():
    config = RepsConfig()
    for seed in range(3):
        ds, D = _blobs(seed)
        splits = make_splits(ds, folds=5, seed=seed)
        assert fsr_error(ds, D, config, 1.0, splits=splits) == nops_error(ds, D, splits)


def test_fsr_error_validates_target():
    ds, D = _blobs()
    with pytest.raises(InvalidConfig):
        fsr_error(ds, D, RepsConfig(), 0.0)


def test_fsr_table_rows():
    ds, D = _blobs()
    rows = fsr_table(ds, D, RepsConfig(), [0.5, 0.2, 0.5])
    assert [r["target_slr"] for r in rows] == [0.2, 0.5]
    for r in rows:
        assert 0.0 <= r["err_fsr"] <= 1.0
        assert r["dataset"] == "blobs"
    assert rows[0]["err_nops"] == rows[1]["err_nops"]


def test_run_folds_fixed_k():
    ds, D = _blobs()
    splits = make_splits(ds, folds=4, seed=1)
    results = run_folds(ds, D, RepsConfig(), splits, k=6)
    assert [r.fold for r in results] == [0, 1, 2, 3]
    for r in results:
        assert r.k == 6
        assert r.n_train == 30
        assert r.slr == pytest.approx(0.2)
        assert 0.0 <= r.err_reps <= 1.0


def test_run_folds_rejects_both_sizings():
    ds, D = _blobs()
    with pytest.raises(InvalidConfig):
        run_folds(ds, D, RepsConfig(), make_splits(ds), k=3, fraction=0.5)


def test_reps_error_full_fraction():
    ds, D = _blobs()
    splits = make_splits(ds, folds=5, seed=0)
    err, slr = reps_error(ds, D, RepsConfig(), splits, fraction=1.0)
    assert err == nops_error(ds, D, splits)
    assert slr == 1.0


def test_reps_error_cv_sizing():
    ds, D = _blobs(n=30)
    splits = make_splits(ds, folds=3, seed=0)
    err, slr = reps_error(ds, D, RepsConfig(), splits, fractions=[0.3, 1.0], cv_folds=3)
    assert 0.0 <= err <= 1.0
    assert 0.0 < slr <= 1.0


def test_beta_sweep_never_nan():
    for seed, name in enumerate(["one", "two", "three"]):
        ds, D = _blobs(seed, n=36, name=name)
        splits = make_splits(ds, folds=3, seed=seed)
        rows = beta_sweep(ds, D, RepsConfig(), [4, 1.5, 3, 2], splits, fraction=0.2)
        assert [r["beta"] for r in rows] == [1.5, 2.0, 3.0, 4.0]
        for r in rows:
            if r["lor"] is None:
                assert r["lor_status"] == "undefined"
            else:
                assert r["lor_status"] == "ok"
                assert math.isfinite(r["lor"])
            if 0 < r["err"] - r["err_nops"] < 1 and 0 < r["err"] < 1 and 0 < r["slr"] < 1:
                assert r["lor"] is not None


def test_beta_sweep_rejects_small_beta():
    ds, D = _blobs()
    with pytest.raises(InvalidConfig):
        beta_sweep(ds, D, RepsConfig(), [1.0, 2.0], make_splits(ds))


def test_iris_at_low_selection_rate():
    iris = load_iris()
    ds = LabeledDataset("iris", "vectors", iris.data, iris.target, tuple(str(name) for name in iris.target_names))
    D = build_matrix(ds)
    splits = make_splits(ds, folds=5, seed=0)
    err, slr = reps_error(ds, D, RepsConfig(beta=2.0, C=0.001), splits, fraction=0.15)
    assert slr == pytest.approx(0.15, abs=0.01)
    assert err <= 0.10


def test_iris_prototypes_cover_every_species():
    iris = load_iris()
    ds = LabeledDataset("iris", "vectors", iris.data, iris.target, tuple(str(name) for name in iris.target_names))
    D = build_matrix(ds)
    for train, _ in make_splits(ds, folds=5, seed=0):
        _, chosen = fit_prototypes(D.submatrix(train), ds.labels[train], RepsConfig(), 18)
        assert sorted(set(ds.labels[train][chosen.selected].tolist())) == [0, 1, 2]


def test_minority_class_folds():
    rng = np.random.default_rng(4)
    points, _ = random_points(rng, 22, d=2, classes=2)
    labels = np.array([0] * 20 + [1] * 2)
    ds = LabeledDataset("minority", "vectors", points, labels)
    D = build_matrix(ds)
    splits = make_splits(ds, folds=5, seed=0)
    results = run_folds(ds, D, RepsConfig(), splits, fractions=[0.2, 0.5, 1.0])
    assert len(results) == 5
    assert all(0.0 <= r.err_reps <= 1.0 for r in results)


def test_single_class_training_part_falls_back_to_labels():
    rng = np.random.default_rng(5)
    points, _ = random_points(rng, 8, d=2, classes=2)
    ds = LabeledDataset("lonely", "vectors", points, [0] * 7 + [1])
    D = build_matrix(ds)
    train, test = np.arange(7), np.array([7])
    (result,) = run_folds(ds, D, RepsConfig(), [(train, test)], fraction=0.5)
    assert result.k == 4
    assert result.err_reps == result.err_nops == 1.0
    assert result.converged


def test_fsr_table_reports_convergence():
    ds, D = _blobs()
    rows = fsr_table(ds, D, RepsConfig(solver="cutting_plane", max_iterations=1), [0.5])
    assert rows[0]["converged"] is False
    rows = fsr_table(ds, D, RepsConfig(), [0.5])
    assert rows[0]["converged"] is True


# ── public datasets (skipped unless REPS_DATA_DIR is set) ──────────

def _data_file(name):
    root = os.getenv("REPS_DATA_DIR")
    path = os.path.join(root, name) if root else ""
    if not path or not os.path.exists(path):
        pytest.skip(f"{name} not available (set REPS_DATA_DIR)")
    return path


def test_ecg200_train_test():
    train = load_ucr_tsv(_data_file("ECG200_TRAIN.tsv"))
    test = load_ucr_tsv(_data_file("ECG200_TEST.tsv"))
    ds = concat_datasets(train, test)
    D = build_matrix(ds, "dtw", 5)
    splits = make_splits(ds, n_test=test.n)
    err, slr = reps_error(ds, D, RepsConfig(beta=2.0, C=0.001), splits, fraction=0.88)
    assert slr == pytest.approx(0.88, abs=0.01)
    assert err <= 0.18
