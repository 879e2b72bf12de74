import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgest import problems
from cgest.precond import Preconditioner, build_ic0, build_jacobi, identity
from cgest.solver import BreakdownError, cg_iter, init, iterate, run
from cgest.sparse import CsrMatrix, DimensionError

D13 = CsrMatrix.diag([1.0, 3.0])


def test_init_identity_system():
    st_ = init(CsrMatrix.diag(np.ones(3)), np.array([1.0, 0.0, 0.0]))
    assert st_.r.tolist() == [1.0, 0.0, 0.0]
    assert st_.p.tolist() == [1.0, 0.0, 0.0]
    assert not st_.converged


def test_init_already_converged():
    st_ = init(D13, np.array([1.0, 1.0]), x0=np.array([1.0, 1.0 / 3.0]))
    assert st_.converged
    assert run(D13, np.array([1.0, 1.0]), x0=np.array([1.0, 1.0 / 3.0])).reason == "converged"


def test_init_rejects_indefinite_preconditioner():
    # forced through the constructor; build_jacobi would refuse this diagonal
    P = Preconditioner("jacobi", 2, diag_inv=np.array([1.0, -1.0]))
    with pytest.raises(BreakdownError):
        init(D13, np.array([0.0, 1.0]), P=P)


def test_init_dimension_mismatch():
    with pytest.raises(DimensionError):
        init(D13, np.ones(3))


def test_diag13_events():
    st_ = init(D13, np.array([1.0, 1.0]))
    e0 = cg_iter(st_, D13)
    assert e0.k == 0 and e0.gamma == 0.5 and e0.rnorm2 == 2.0 and e0.rz == 2.0
    e1 = cg_iter(st_, D13)
    assert e1.k == 1
    assert e1.gamma == pytest.approx(2 / 3, rel=1e-15)
    assert e1.rnorm2 == pytest.approx(0.5, rel=1e-15)
    assert np.linalg.norm(st_.r) <= 1e-15
    assert np.allclose(st_.x, [1.0, 1.0 / 3.0], rtol=1e-15)


def test_identity_matrix_one_step():
    A = CsrMatrix.diag(np.ones(4))
    b = np.array([1.0, 2.0, 3.0, 4.0])
    st_ = init(A, b)
    ev = cg_iter(st_, A)
    assert ev.gamma == 1.0
    assert np.array_equal(st_.x, b)


def test_finite_termination_tridiag():
    A = problems.laplacian_1d(10)
    b = np.ones(10)
    n = 0
    for ev, state in iterate(A, b, residual_floor=1e-12):
        n += 1
    assert n <= 10
    assert np.linalg.norm(state.r) < 1e-12 * np.linalg.norm(b)


def test_max_iter_limits_stream():
    A = problems.laplacian_1d(50)
    assert len(list(iterate(A, np.ones(50), max_iter=5))) == 5
    res = run(A, np.ones(50), max_iter=5)
    assert res.reason == "max_iter" and res.iterations == 5


def test_callback_stop_returns_latest_iterate():
    A = problems.laplacian_1d(50)
    b = np.ones(50)
    seen = {}

    def cb(ev, state):
        if ev.k == 3:
            seen["x"] = state.x.copy()
            return True
        return False

    res = run(A, b, callback=cb)
    assert res.reason == "callback" and res.iterations == 4
    assert np.array_equal(res.x, seen["x"])
    ref = run(A, b, max_iter=4)
    assert np.array_equal(res.x, ref.x)


def test_breakdown_on_indefinite_matrix():
    A = CsrMatrix.diag([1.0, -1.0])
    with pytest.raises(BreakdownError):
        run(A, np.array([1.0, 1.0]))


def test_identity_preconditioner_is_bitwise_cg():
    A = problems.random_sparse_spd(120, 0.05, seed=5)
    b = np.random.default_rng(2).uniform(-1, 1, 120)
    a = [ev for ev, _ in iterate(A, b, max_iter=80)]
    c = [ev for ev, _ in iterate(A, b, P=identity(120), max_iter=80)]
    assert a == c
    assert np.array_equal(run(A, b, max_iter=80).x, run(A, b, P=identity(120), max_iter=80).x)


@pytest.mark.parametrize("kind", ["none", "jacobi", "ic0"])
def test_local_orthogonality_and_pi(kind):
    A = problems.random_sparse_spd(150, 0.04, seed=7, diag_scale=3.0)
    P = {"none": None, "jacobi": build_jacobi(A), "ic0": build_ic0(A)}[kind]
    b = np.random.default_rng(3).uniform(-1, 1, 150)
    state = init(A, b, P=P)
    pi = 1.0
    for k in range(25):
        p_old = state.p.copy()
        ev = cg_iter(state, A, P)
        cos = abs(state.r @ p_old) / (np.linalg.norm(state.r) * np.linalg.norm(p_old))
        assert cos <= 1e-10
        if kind == "none":
            assert abs(ev.rnorm2 / ev.pnorm2 - pi) <= 1e-8 * pi
            pi = pi / (pi + ev.beta_next)


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 60), st.integers(0, 10**6))
def test_terms_positive_and_errors_decrease(n, seed):
    A = problems.random_sparse_spd(n, 0.2, seed=seed, diag_scale=2.0)
    b = np.random.default_rng(seed).uniform(-1, 1, n)
    x = np.linalg.solve(A.toarray(), b)
    Ad = A.toarray()
    prev = float(x @ Ad @ x)
    for ev, state in iterate(A, b, max_iter=n):
        assert ev.gamma > 0 and ev.rz > 0
        e = x - state.x
        cur = float(e @ Ad @ e)
        if cur < 1e-20 * float(x @ Ad @ x):
            break
        assert cur < prev
        prev = cur
