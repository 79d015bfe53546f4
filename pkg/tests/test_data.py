import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rpsubspace.data import LabeledDataset, ParseError, generate_union, load_matrix, save_matrix, split
from rpsubspace.geometry import SubspaceBasis, check_independence, numerical_rank, subspace_margin


def test_generate_union_construction():
    X = generate_union(50, 3, 3, 15, seed=0)
    assert X.vectors.shape == (45, 50)
    assert np.bincount(X.labels).tolist() == [0, 15, 15, 15]
    assert check_independence([SubspaceBasis(B) for B in X.bases])
    assert numerical_rank(np.hstack(X.bases)) == 9
    for i, B in enumerate(X.bases):
        V = X.class_vectors(i + 1)
        resid = V - (V @ B) @ B.T
        assert np.linalg.norm(resid, axis=1).max() <= 1e-10 * np.linalg.norm(V, axis=1).max()


def test_generate_union_deterministic():
    a, b = generate_union(20, 2, [2, 3], [4, 6], seed=9), generate_union(20, 2, [2, 3], [4, 6], seed=9)
    assert a.vectors.tobytes() == b.vectors.tobytes()
    assert a.provenance == b.provenance


def test_orthogonal_axis_realization():
    X = generate_union(3, 3, 1, 2, seed=1, orthogonal=True)
    for i in range(3):
        for j in range(i + 1, 3):
            assert subspace_margin(X.bases[i], X.bases[j])[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(n=5, K=2, dims=3, counts=4),
    dict(n=10, K=2, dims=3, counts=2),
    dict(n=10, K=0, dims=1, counts=1),
    dict(n=10, K=2, dims=0, counts=1),
])
def test_generate_union_invalid(kwargs):
    with pytest.raises(ValueError):
        generate_union(**kwargs)


def test_csv_two_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("f1,f2,label\n1.0,2.0,1\n3.0,4.0,2\n")
    X = load_matrix(p)
    assert X.size == 2 and X.dim == 2
    np.testing.assert_array_equal(X.labels, [1, 2])


@pytest.mark.parametrize("text, line", [
    ("1,2,1\n3,1\n", 2),
    ("1,2,1\n3,x,1\n", 2),
    ("1,2,1\n3,4,0\n", 2),
    ("1,2,1\n\n3,4,1.5\n", 3),
])
def test_csv_errors_carry_line_numbers(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ParseError) as exc:
        load_matrix(p)
    assert exc.value.line == line
    assert f":{line}" in str(exc.value)


def test_raw_round_trip_bit_identical(tmp_path):
    X = generate_union(16, 3, 2, 5, seed=2)
    p = tmp_path / "d.f64"
    save_matrix(X, p)
    Y = load_matrix(p)
    assert Y.vectors.tobytes() == X.vectors.tobytes()
    np.testing.assert_array_equal(Y.labels, X.labels)
    save_matrix(Y, tmp_path / "e.f64")
    assert (tmp_path / "e.f64").read_bytes() == p.read_bytes()


def test_raw_layout(tmp_path):
    p = tmp_path / "d.raw"
    p.write_bytes(struct.pack("<qqq", 2, 2, 2) + np.array([1.0, 2, 3, 4], "<f8").tobytes()
                  + np.array([1, 2], "<i8").tobytes())
    X = load_matrix(p)
    np.testing.assert_array_equal(X.vectors, [[1, 2], [3, 4]])


@pytest.mark.parametrize("payload", [
    b"\x00" * 10,
    struct.pack("<qqq", 2, 2, 2) + b"\x00" * 8,
    struct.pack("<qqq", 1, 1, 1) + np.array([1.0], "<f8").tobytes() + np.array([5], "<i8").tobytes(),
])
def test_raw_errors(tmp_path, payload):
    p = tmp_path / "bad.f64"
    p.write_bytes(payload)
    with pytest.raises(ParseError):
        load_matrix(p)


def test_csv_round_trip(tmp_path):
    X = generate_union(6, 2, 1, 3, seed=3)
    save_matrix(X, tmp_path / "x.csv")
    Y = load_matrix(tmp_path / "x.csv")
    np.testing.assert_array_equal(Y.vectors, X.vectors)


def test_yale_shaped_input_accepted(tmp_path):
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(1, 39), 64)[:2414]
    X = LabeledDataset(rng.random((labels.size, 1024)), labels)
    save_matrix(X, tmp_path / "yale.f64")
    Y = load_matrix(tmp_path / "yale.f64")
    assert (Y.size, Y.dim, Y.n_classes) == (2414, 1024, 38)


def test_split_fractions():
    X = LabeledDataset(np.random.default_rng(0).standard_normal((38 * 64, 4)), np.repeat(np.arange(1, 39), 64))
    tr, te = split(X, 0.5, seed=1)
    assert np.all(np.bincount(tr.labels)[1:] == 32) and np.all(np.bincount(te.labels)[1:] == 32)
    X = LabeledDataset(np.zeros((10 * 170, 2)), np.repeat(np.arange(1, 11), 170))
    tr, te = split(X, 0.7, seed=1)
    assert np.all(np.bincount(tr.labels)[1:] == 119) and np.all(np.bincount(te.labels)[1:] == 51)


def test_split_deterministic_and_disjoint():
    X = generate_union(10, 2, 2, 11, seed=0)
    a, b = split(X, 0.3, seed=5), split(X, 0.3, seed=5)
    assert a[0].vectors.tobytes() == b[0].vectors.tobytes()
    rows = {tuple(v) for v in a[0].vectors} | {tuple(v) for v in a[1].vectors}
    assert len(rows) == X.size


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(2, 30), min_size=1, max_size=5), st.floats(0.05, 0.95))
def test_split_is_stratified(counts, f):
    labels = np.concatenate([np.full(c, i + 1) for i, c in enumerate(counts)])
    X = LabeledDataset(np.zeros((labels.size, 1)), labels)
    tr, te = split(X, f, seed=0)
    for i, c in enumerate(counts):
        k = int(np.sum(tr.labels == i + 1))
        assert 1 <= k <= c - 1
        assert abs(k - f * c) <= 1
        assert k + int(np.sum(te.labels == i + 1)) == c


def test_split_invalid():
    X = LabeledDataset(np.zeros((3, 1)), [1, 1, 2])
    with pytest.raises(ValueError):
        split(X, 0.5)
    with pytest.raises(ValueError):
        split(generate_union(5, 1, 1, 4), 1.0)


def test_labels_must_be_positive():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((2, 2)), [0, 1])
