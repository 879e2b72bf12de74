import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgest import problems
from cgest.precond import IC0Breakdown, apply, build, build_ic0, build_jacobi, identity
from cgest.sparse import CsrMatrix


def test_jacobi_diagonal_solve():
    P = build_jacobi(CsrMatrix.diag([2.0, 4.0]))
    assert apply(P, np.array([2.0, 4.0])).tolist() == [1.0, 1.0]
    assert apply(P, np.array([1.0, 1.0])).tolist() == [0.5, 0.25]


def test_jacobi_on_identity_is_identity():
    P = build_jacobi(CsrMatrix.diag(np.ones(3)))
    r = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(apply(P, r), r)


def test_jacobi_rejects_zero_diagonal():
    with pytest.raises(ValueError):
        build_jacobi(CsrMatrix.from_dense([[0.0, 1.0], [1.0, 2.0]]))


def test_identity_apply():
    assert apply(identity(2), np.array([1.0, 2.0])).tolist() == [1.0, 2.0]


def test_ic0_diagonal():
    P = build_ic0(CsrMatrix.diag([4.0, 9.0]))
    assert P.factor().toarray().tolist() == [[2.0, 0.0], [0.0, 3.0]]


def test_ic0_full_pattern_is_cholesky():
    A = CsrMatrix.from_dense([[4.0, 2.0], [2.0, 5.0]])
    P = build_ic0(A)
    assert np.allclose(P.factor().toarray(), [[2.0, 0.0], [1.0, 2.0]], rtol=0, atol=1e-15)
    z = apply(P, np.array([4.0, 7.0]))
    assert np.allclose(z, np.linalg.solve(A.toarray(), [4.0, 7.0]), rtol=1e-14)


@pytest.mark.parametrize("A", [
    problems.laplacian_1d(5),
    problems.laplacian_2d(12),
    problems.random_sparse_spd(200, 0.03, seed=4, diag_scale=3.0),
], ids=["tridiag5", "lap2d", "random"])
def test_ic0_pattern_residual(A):
    L = build_ic0(A).factor()
    R = (L @ L.T).toarray() - A.toarray()
    on = A.toarray() != 0
    assert np.max(np.abs(R[on])) <= 1e-12 * np.max(np.abs(A.values))
    # no fill outside the lower pattern
    assert np.all((L.toarray() != 0) <= np.tril(on))


def test_ic0_breakdown_reports_row_and_shift_recovers():
    A = CsrMatrix.from_dense([[1.0, 2.0], [2.0, 1.5]])
    with pytest.raises(IC0Breakdown) as exc:
        build_ic0(A)
    assert exc.value.row == 1
    build_ic0(A, shift=3.0)


def test_build_dispatch():
    A = problems.laplacian_1d(4)
    assert build(A, "jacobi").kind == "jacobi"
    assert build(A, "ic0").kind == "ic0"
    with pytest.raises(ValueError):
        build(A, "ict")


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["identity", "jacobi", "ic0"]), st.integers(0, 10**6), st.floats(-10, 10))
def test_apply_linear_and_positive(kind, seed, alpha):
    A = problems.random_sparse_spd(30, 0.1, seed=seed % 50, diag_scale=3.0)
    P = build(A, kind)
    rng = np.random.default_rng(seed)
    r, s = rng.standard_normal(30), rng.standard_normal(30)
    lhs = apply(P, alpha * r + s)
    rhs = alpha * apply(P, r) + apply(P, s)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * (1 + np.linalg.norm(rhs) + abs(alpha) * np.linalg.norm(apply(P, r)))
    assert float(r @ apply(P, r)) > 0
