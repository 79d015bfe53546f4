import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from rpsubspace.data import generate_union, split
from rpsubspace.sparserep import (CONVERGED, DEFAULT_TOL, INFEASIBLE, MAX_ITER, SparseCode, _decide, Dictionary, SolverError, basis_pursuit,
                                  basis_pursuit_batch, restrict, src_classify, src_classify_batch,
                                  ssc_support_check)


def lp_oracle(A, y):
    """min 1'(p + q) s.t. A (p - q) = y, p, q >= 0."""
    T = A.shape[1]
    res = linprog(np.ones(2 * T), A_eq=np.hstack([A, -A]), b_eq=y, bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def random_instance(seed, m=None, T=None):
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(2, 7))
    T = T or int(rng.integers(m + 1, 13))
    D = Dictionary(rng.standard_normal((m, T)), rng.integers(1, 4, T))
    y = rng.standard_normal(m)
    return D, y


def test_single_atom():
    D, _ = random_instance(0, 4, 8)
    code = basis_pursuit(D, D.columns[:, 3])
    assert code.status == CONVERGED
    np.testing.assert_allclose(code.w, np.eye(8)[3], atol=1e-6)
    assert code.objective == pytest.approx(1.0, abs=1e-6)


def test_matches_lp_oracle_m4_t8():
    D, y = random_instance(1, 4, 8)
    code = basis_pursuit(D, y)
    assert code.converged
    assert abs(code.objective - lp_oracle(D.columns, y)) <= 10 * DEFAULT_TOL


@pytest.mark.parametrize("seed", range(40))
def test_matches_lp_oracle_random(seed):
    D, y = random_instance(100 + seed)
    code = basis_pursuit(D, y)
    assert code.converged
    assert abs(code.objective - lp_oracle(D.columns, y)) <= 10 * DEFAULT_TOL
    np.testing.assert_allclose(D.columns @ code.w, y, atol=1e-6)


def test_batch_equals_single():
    D, _ = random_instance(7, 5, 11)
    Y = np.random.default_rng(0).standard_normal((5, 6))
    batch = basis_pursuit_batch(D, Y)
    for j in range(6):
        assert batch[j].objective == pytest.approx(basis_pursuit(D, Y[:, j]).objective, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 50.0))
def test_scale_covariance(seed, c):
    D, y = random_instance(seed, 4, 9)
    a, b = basis_pursuit(D, y), basis_pursuit(D, c * y)
    assert b.objective == pytest.approx(c * a.objective, rel=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residual_decomposition_and_feasibility(seed):
    D, y = random_instance(seed)
    code = basis_pursuit(D, y)
    total = sum(restrict(code.w, D.labels, c) for c in D.classes)
    np.testing.assert_array_equal(total, code.w)
    assert np.linalg.norm(D.columns @ code.w - y) <= 1e-6 * np.linalg.norm(y)
    assert code.objective <= np.abs(D.least_norm(y)).sum() + 1e-9


def test_zero_measurement():
    D, _ = random_instance(2, 3, 6)
    code = basis_pursuit(D, np.zeros(3))
    assert code.converged and not np.any(code.w)
    assert ssc_support_check(code, D.labels, 1)


def test_infeasible_status():
    D = Dictionary(np.array([[1.0, 2.0], [0.0, 0.0], [1.0, 1.0]]), [1, 2])
    code = basis_pursuit(D, np.array([0.0, 1.0, 0.0]))
    assert code.status == INFEASIBLE
    with pytest.raises(SolverError) as exc:
        src_classify(D, np.array([0.0, 1.0, 0.0]))
    assert exc.value.code.status == INFEASIBLE


def test_invalid_arguments():
    with pytest.raises(ValueError):
        Dictionary(np.zeros((3, 2)), [1, 2])
    with pytest.raises(ValueError):
        Dictionary(np.ones((3, 2)), [1])
    D, y = random_instance(3, 3, 6)
    with pytest.raises(ValueError):
        basis_pursuit(D, np.ones(4))
    with pytest.raises(ValueError):
        basis_pursuit(D, y, sigma=-1.0)


@pytest.mark.parametrize("seed", range(5))
def test_noisy_branch_matches_cvxpy(seed):
    rng = np.random.default_rng(seed)
    D = Dictionary(rng.standard_normal((6, 14)), rng.integers(1, 3, 14))
    y = rng.standard_normal(6)
    sigma = 0.3 * np.linalg.norm(y)
    w = cp.Variable(14)
    prob = cp.Problem(cp.Minimize(cp.norm1(w)), [cp.norm2(D.columns @ w - y) <= sigma])
    prob.solve(solver=cp.CLARABEL)
    code = basis_pursuit(D, y, sigma=sigma)
    assert code.converged
    assert np.linalg.norm(D.columns @ code.w - y) <= sigma * (1 + 1e-4)
    assert code.objective == pytest.approx(prob.value, rel=1e-3)


@pytest.mark.parametrize("seed", range(10))
def test_support_stays_in_own_subspace(seed):
    X = generate_union(50, 3, 3, 15, seed=seed)
    train, test = split(X, 0.5, seed)
    D = Dictionary.from_dataset(train)
    for y, label in zip(test.vectors, test.labels):
        assert ssc_support_check(basis_pursuit(D, y), D.labels, label)


def test_support_check_flags_shared_subspace():
    rng = np.random.default_rng(0)
    B = np.linalg.qr(rng.standard_normal((20, 2)))[0]
    cols = B @ rng.standard_normal((2, 8))
    D = Dictionary(cols, [1] * 4 + [2] * 4)
    code = basis_pursuit(D, B @ rng.standard_normal(2))
    # identical subspaces violate the recovery hypothesis; only check the call works
    assert isinstance(ssc_support_check(code, D.labels, 1), bool)


def test_src_training_column_and_full_accuracy():
    X = generate_union(60, 3, 3, 20, seed=4)
    train, test = split(X, 0.5, 4)
    D = Dictionary.from_dataset(train)
    j = int(np.flatnonzero(D.labels == 2)[0])
    label, residuals, _ = src_classify(D, D.columns[:, j])
    assert label == 2 and residuals[2] <= 1e-6
    labels, codes = src_classify_batch(D, test.vectors)
    assert np.all(labels == test.labels)
    assert all(c.converged for c in codes)


def test_src_tie_goes_to_smallest_class():
    code = SparseCode(w=np.zeros(3), residuals={3: 0.5, 2: 0.5, 4: 0.7})
    assert _decide(code) == 2
    with pytest.raises(SolverError):
        _decide(SparseCode(w=np.zeros(3), residuals={1: 0.0}, status=MAX_ITER))
