"""Loaders, writers and stratified splits."""
import numpy as np
import pytest

from reps.services.dataset import (
    LabeledDataset,
    concat_datasets,
    fold_indices,
    holdout_split,
    kfold_split,
    load_distance_matrix,
    load_ucr_tsv,
    load_vector_csv,
    max_fold_count,
    write_distance_matrix,
    write_ucr_tsv,
    write_vector_csv,
)
from reps.services.errors import (
    AsymmetryError,
    DegenerateData,
    InvalidConfig,
    InvalidFoldCount,
    IoError,
    NegativeDistance,
    NonzeroDiagonal,
    ParseError,
)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_vector_csv_basic(tmp_path):
    path = _write(tmp_path, "toy.csv", "a,1.0,2.0\nb,3.0,4.0\na,5.0,6.0\n")
    ds = load_vector_csv(path, label_column=0)
    assert ds.n == 3
    assert ds.dimension == 2
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.label_names == ("a", "b")
    assert ds.name == "toy"
    assert ds.instances[2].tolist() == [5.0, 6.0]


def test_load_vector_csv_reports_bad_cell(tmp_path):
    path = _write(tmp_path, "bad.csv", "a,1.0,x\nb,2.0,3.0\n")
    with pytest.raises(ParseError) as exc:
        load_vector_csv(path, label_column=0)
    assert exc.value.row == 1
    assert exc.value.column == 3


def test_load_vector_csv_ragged_row(tmp_path):
    path = _write(tmp_path, "ragged.csv", "a,1,2\nb,3\n")
    with pytest.raises(ParseError) as exc:
        load_vector_csv(path)
    assert exc.value.row == 2


def test_load_vector_csv_rejects_nan(tmp_path):
    path = _write(tmp_path, "nan.csv", "a,1,2\nb,nan,3\n")
    with pytest.raises(ParseError):
        load_vector_csv(path)


def test_load_vector_csv_single_class(tmp_path):
    path = _write(tmp_path, "one.csv", "a,1,2\na,3,4\n")
    with pytest.raises(DegenerateData):
        load_vector_csv(path)


def test_load_vector_csv_label_last_with_header(tmp_path):
    path = _write(tmp_path, "iris_like.csv", "x,y,species\n1,2,setosa\n3,4,virginica\n5,6,setosa\n")
    ds = load_vector_csv(path, label_column=-1, skip_header=True)
    assert ds.n == 3
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.instances[1].tolist() == [3.0, 4.0]


def test_load_vector_csv_bad_label_column(tmp_path):
    path = _write(tmp_path, "toy.csv", "a,1\nb,2\n")
    with pytest.raises(InvalidConfig):
        load_vector_csv(path, label_column=5)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        load_vector_csv(str(tmp_path / "absent.csv"))


def test_load_ucr_space_delimited(tmp_path):
    path = _write(tmp_path, "ucr.txt", "1 0.0 0.5 1.0\n2 1.0 0.5 0.0\n")
    ds = load_ucr_tsv(path)
    assert ds.kind == "series"
    assert ds.n == 2
    assert ds.dimension == 3
    assert ds.labels.tolist() == [0, 1]


def test_load_ucr_tab_and_comma(tmp_path):
    tabbed = load_ucr_tsv(_write(tmp_path, "t.tsv", "1\t0\t1\n2\t1\t0\n"))
    commas = load_ucr_tsv(_write(tmp_path, "c.csv", "1,0,1\n2,1,0\n"))
    assert np.array_equal(tabbed.instances, commas.instances)


def test_load_ucr_ragged(tmp_path):
    path = _write(tmp_path, "ragged.tsv", "1 0 0 0 0\n2 0 0 0 0 0\n")
    with pytest.raises(ParseError) as exc:
        load_ucr_tsv(path)
    assert exc.value.row == 2


def test_load_ucr_empty_file(tmp_path):
    with pytest.raises(DegenerateData):
        load_ucr_tsv(_write(tmp_path, "empty.tsv", ""))


def test_load_distance_matrix_valid(tmp_path):
    D, ds = load_distance_matrix(_write(tmp_path, "d.csv", "a,0,1\nb,1,0\n"))
    assert D.n == 2
    assert ds.kind == "index"
    assert ds.labels.tolist() == [0, 1]
    assert D.values[0, 1] == 1.0


def test_load_distance_matrix_asymmetric(tmp_path):
    with pytest.raises(AsymmetryError):
        load_distance_matrix(_write(tmp_path, "d.csv", "a,0,1\nb,2,0\n"))


def test_load_distance_matrix_nonzero_diagonal(tmp_path):
    with pytest.raises(NonzeroDiagonal):
        load_distance_matrix(_write(tmp_path, "d.csv", "a,0.5,1\nb,1,0\n"))


def test_load_distance_matrix_negative(tmp_path):
    with pytest.raises(NegativeDistance):
        load_distance_matrix(_write(tmp_path, "d.csv", "a,0,-1\nb,-1,0\n"))


def test_load_distance_matrix_symmetrizes_noise(tmp_path):
    D, _ = load_distance_matrix(_write(tmp_path, "d.csv", "a,0,1\nb,1.0000000000001,0\n"))
    assert D.values[0, 1] == D.values[1, 0]


def test_load_distance_matrix_not_square(tmp_path):
    with pytest.raises(ParseError):
        load_distance_matrix(_write(tmp_path, "d.csv", "a,0,1,2\nb,1,0,3\n"))


def test_vector_round_trip(tmp_path, rng):
    ds = LabeledDataset("blob", "vectors", rng.normal(size=(12, 3)), np.arange(12) % 3, ("x", "y", "z"))
    path = str(tmp_path / "blob.csv")
    write_vector_csv(ds, path)
    back = load_vector_csv(path, label_column=0)
    assert np.array_equal(back.instances, ds.instances)
    assert back.labels.tolist() == ds.labels.tolist()
    assert back.label_names == ds.label_names


def test_ucr_round_trip(tmp_path, rng):
    ds = LabeledDataset("waves", "series", rng.normal(size=(6, 20)), [0, 1, 0, 1, 1, 0], ("1", "2"))
    path = str(tmp_path / "waves.tsv")
    write_ucr_tsv(ds, path)
    back = load_ucr_tsv(path)
    assert np.array_equal(back.instances, ds.instances)
    assert back.labels.tolist() == ds.labels.tolist()


def test_distance_matrix_round_trip(tmp_path, worked_matrix, worked_labels):
    from reps.services.dataset import index_dataset
    ds = index_dataset("worked", worked_labels, ("A", "B"))
    path = str(tmp_path / "worked.csv")
    write_distance_matrix(worked_matrix.scaled(1.1), ds, path)
    D, back = load_distance_matrix(path)
    assert np.array_equal(D.values, worked_matrix.scaled(1.1).values)
    assert back.labels.tolist() == worked_labels.tolist()


def _dataset(labels):
    labels = np.asarray(labels)
    return LabeledDataset("toy", "vectors", np.zeros((len(labels), 1)), labels)


def test_kfold_perfect_stratification():
    plan = kfold_split(_dataset([0] * 5 + [1] * 5), k=5, seed=7)
    for f in range(5):
        _, test = plan.fold(f)
        assert sorted(plan.fold_of[test].tolist()) == [f, f]
        assert sorted((np.arange(10)[test] >= 5).tolist()) == [False, True]


def test_kfold_too_many_folds():
    with pytest.raises(InvalidFoldCount):
        kfold_split(_dataset([0, 0, 1, 1]), k=5, seed=0)


def test_kfold_needs_a_class_as_large_as_k():
    ds = _dataset([0, 0, 0, 1, 1, 2])
    assert max_fold_count(ds) == 3
    plan = kfold_split(ds, k=3, seed=1)
    assert sorted(set(plan.fold_of.tolist())) == [0, 1, 2]
    with pytest.raises(InvalidFoldCount):
        kfold_split(ds, k=4, seed=1)


def test_kfold_rejects_bad_seed():
    with pytest.raises(InvalidConfig):
        kfold_split(_dataset([0, 0, 1, 1]), k=2, seed=-1)


def test_kfold_deterministic():
    ds = _dataset([0, 1, 2] * 7)
    a = kfold_split(ds, k=4, seed=2 ** 63 + 11)
    b = kfold_split(ds, k=4, seed=2 ** 63 + 11)
    assert a.fold_of.tolist() == b.fold_of.tolist()


def test_kfold_properties(rng):
    for _ in range(50):
        n = int(rng.integers(6, 60))
        labels = rng.integers(0, 3, size=n)
        labels[:2] = [0, 1]
        ds = _dataset(labels)
        k = int(rng.integers(2, min(max_fold_count(ds), 10) + 1))
        plan = kfold_split(ds, k, int(rng.integers(0, 2 ** 32)))

        tests = [plan.fold(f)[1] for f in range(k)]
        assert all(len(t) > 0 for t in tests)
        assert sorted(np.concatenate(tests).tolist()) == list(range(n))
        for c in np.unique(labels):
            counts = [int(np.sum(labels[t] == c)) for t in tests]
            assert max(counts) - min(counts) <= 1


def test_fold_indices_and_holdout():
    plan = kfold_split(_dataset([0, 0, 1, 1]), k=2, seed=0)
    train, test = fold_indices(plan, 1)
    assert sorted(np.concatenate([train, test]).tolist()) == [0, 1, 2, 3]
    with pytest.raises(InvalidFoldCount):
        fold_indices(plan, 2)

    train, test = holdout_split(3, 2)
    assert train.tolist() == [0, 1, 2]
    assert test.tolist() == [3, 4]


def test_concat_reinterns_labels():
    first = LabeledDataset("tr", "series", np.zeros((2, 3)), [0, 1], ("1", "2"))
    second = LabeledDataset("te", "series", np.ones((3, 3)), [0, 1, 0], ("2", "3"))
    both = concat_datasets(first, second)
    assert both.n == 5
    assert both.label_names == ("1", "2", "3")
    assert both.labels.tolist() == [0, 1, 1, 2, 1]


def test_dataset_is_read_only():
    ds = _dataset([0, 1])
    with pytest.raises(ValueError):
        ds.labels[0] = 5
