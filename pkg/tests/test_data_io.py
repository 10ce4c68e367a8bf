import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tfdf.data_io import (
    TaskPair,
    build_label_structures,
    label_structures,
    load_labels,
    load_matrix,
    preprocess,
    save_labels,
    save_matrix,
)
from tfdf.errors import DataError, MissingFile, NonFiniteValue, ParseError

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
matrices = st.integers(1, 6).flatmap(
    lambda r: st.integers(1, 5).flatmap(lambda c: arrays(np.float64, (r, c), elements=finite))
)


def test_load_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1.0,2.0\n3.0,4.0")
    np.testing.assert_array_equal(load_matrix(p), [[1, 2], [3, 4]])


def test_csv_header_is_skipped(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    np.testing.assert_array_equal(load_matrix(p), [[1, 2]])


def test_nan_cell_rejected(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1.0,nan\n3.0,4.0\n")
    with pytest.raises(NonFiniteValue) as err:
        load_matrix(p)
    assert (err.value.row, err.value.col) == (0, 1)


def test_empty_file_rejected(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("")
    with pytest.raises(ParseError):
        load_matrix(p)


def test_ragged_and_garbage_rows(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(ParseError):
        load_matrix(p)
    p.write_text("1,2\n3,x\n")
    with pytest.raises(ParseError) as err:
        load_matrix(p)
    assert (err.value.row, err.value.col) == (1, 1)


def test_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        load_matrix(tmp_path / "nope.csv")


def test_negative_zero_survives_csv(tmp_path):
    p = tmp_path / "z.csv"
    save_matrix(p, np.array([[-0.0, 1e-300]]))
    assert load_matrix(p).tobytes() == np.array([[-0.0, 1e-300]]).tobytes()


def test_raw_truncated(tmp_path):
    p = tmp_path / "x.bin"
    save_matrix(p, np.ones((2, 2)), "raw-f64")
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(ParseError):
        load_matrix(p, "raw-f64")


@settings(max_examples=40, deadline=None)
@given(matrices, st.sampled_from(["csv", "raw-f64"]))
def test_round_trip_is_bit_exact(tmp_path_factory, X, fmt):
    p = tmp_path_factory.mktemp("rt") / "m"
    save_matrix(p, X, fmt)
    Y = load_matrix(p, fmt)
    assert Y.shape == X.shape
    assert Y.tobytes() == X.tobytes()


def test_labels_one_based_on_disk(tmp_path):
    p = tmp_path / "y.csv"
    save_labels(p, [0, 2, 1])
    assert p.read_text() == "1\n3\n2\n"
    np.testing.assert_array_equal(load_labels(p), [0, 2, 1])
    p.write_text("0\n")
    with pytest.raises(DataError):
        load_labels(p)


def test_preprocess_examples():
    np.testing.assert_allclose(preprocess([[1.0], [3.0]], "zscore"), [[-1.0], [1.0]])
    np.testing.assert_allclose(preprocess([[3.0, 4.0]], "unit_l2"), [[0.6, 0.8]])
    X = np.array([[1.0, -2.0], [5.0, 7.0]])
    np.testing.assert_array_equal(preprocess(X, "none"), X)


def test_zscore_constant_column(rng):
    X = np.c_[rng.standard_normal(20), np.full(20, 4.0)]
    Z = preprocess(X, "zscore")
    assert np.all(np.abs(Z.mean(axis=0)) < 1e-10)
    assert Z[:, 1].tolist() == [0.0] * 20
    assert Z[:, 0].std() == pytest.approx(1.0)


def test_unit_l2_keeps_zero_rows():
    Z = preprocess([[0.0, 0.0], [1.0, 1.0]], "unit_l2")
    assert Z[0].tolist() == [0.0, 0.0]
    assert np.linalg.norm(Z[1]) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(matrices)
def test_unit_l2_idempotent(X):
    once = preprocess(X, "unit_l2")
    np.testing.assert_allclose(preprocess(once, "unit_l2"), once, atol=1e-12)


def test_label_structures_example():
    lab = label_structures([0, 1], 1, 2)
    np.testing.assert_array_equal(lab.Y, [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(lab.A, np.diag([1, 1, 0]))


def test_label_structures_degenerate_cases():
    lab = label_structures([0, 0, 0], 2, 2)
    assert lab.Y[1, :3].tolist() == [0, 0, 0]
    lab = label_structures([0, 1, 1], 0, 2)
    np.testing.assert_array_equal(lab.A, np.eye(3))


@given(st.lists(st.integers(0, 3), min_size=4, max_size=20), st.integers(0, 10))
def test_label_columns_sum_to_indicator(y, n_t):
    lab = label_structures(np.array(y), n_t, 4)
    np.testing.assert_array_equal(lab.Y.sum(axis=0), lab.a)
    assert lab.a.sum() == len(y)


def test_task_pair_validation(rng):
    Xs, Xt = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
    task = build_label_structures(TaskPair(Xs, [0, 1, 0, 1], Xt))
    assert task.Y.shape == (2, 9)
    with pytest.raises(DataError):
        TaskPair(Xs, [0, 1, 0, 1], rng.standard_normal((5, 2)))
    with pytest.raises(DataError):
        TaskPair(Xs, [0, 0, 0, 0], Xt, num_classes=2)
    with pytest.raises(DataError):
        TaskPair(Xs, [0, 1, 0, 1], Xt, target_y=[0, 1])
