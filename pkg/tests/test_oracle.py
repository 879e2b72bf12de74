import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgest import oracle, problems
from cgest.estimator import AcceptedEstimate, adaptive_pcg
from cgest.precond import build_jacobi
from cgest.sparse import CsrMatrix

D13 = CsrMatrix.diag([1.0, 3.0])


def trace(eps, ku=None):
    eps = np.asarray(eps, dtype=float)
    return oracle.TruthTrace(eps, len(eps) if ku is None else ku, 1.0, 1.0)


# -- direct solve and true errors -----------------------------------------------------

def test_direct_solve_diagonal():
    assert np.allclose(oracle.direct_solve(D13, np.array([1.0, 1.0])), [1.0, 1 / 3], rtol=1e-15)


def test_direct_solve_tridiag():
    x = oracle.direct_solve(problems.laplacian_1d(4), np.array([1.0, 0, 0, 0]))
    assert np.allclose(x, [0.8, 0.6, 0.4, 0.2], rtol=1e-14)


def test_direct_solve_rejects_indefinite():
    with pytest.raises(np.linalg.LinAlgError):
        oracle.direct_solve(CsrMatrix.diag([1.0, -1.0]), np.ones(2))


def test_direct_solve_cap(monkeypatch):
    monkeypatch.setenv("CGEST_ORACLE_CAP", "3")
    with pytest.raises(oracle.OracleCapExceeded):
        oracle.direct_solve(problems.laplacian_1d(4), np.ones(4))


def test_true_error_examples():
    x = np.array([1.0, 1 / 3])
    assert oracle.true_error(D13, x, x) == 0.0
    assert oracle.true_error(D13, x, np.zeros(2)) == pytest.approx(4 / 3, rel=1e-15)
    I3 = CsrMatrix.diag(np.ones(3))
    assert oracle.true_error(I3, np.array([1.0, 2, 3]), np.zeros(3)) == 14.0


# -- ideal delay ------------------------------------------------------------------------

def test_ideal_delay_diag13():
    assert oracle.ideal_delay(trace([4 / 3, 1 / 3, 0.0], ku=2), 0, 0.25) == 0


def test_ideal_delay_geometric():
    tr = trace(10.0 ** -np.arange(20))
    assert oracle.ideal_delays(tr, 0.25) == [0] * 19


def test_ideal_delay_cliff():
    K = 15
    eps = np.concatenate([1.0 - 1e-3 * np.arange(K), 1e-6 * 10.0 ** -np.arange(5)])
    tr = trace(eps)
    for k in range(K):
        assert oracle.ideal_delay(tr, k, 0.25) == K - k - 1


def test_ideal_delay_undefined_near_end():
    tr = trace([1.0, 0.9, 0.8])
    assert oracle.ideal_delay(tr, 0, 0.25) is None
    assert oracle.ideal_delay(tr, 5, 0.25) is None


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=40), st.floats(0.01, 0.9), st.floats(0.01, 0.9))
def test_ideal_delay_nonincreasing_in_tau(ratios, t1, t2):
    eps = np.cumprod([1.0] + ratios)
    tr = trace(eps)
    lo, hi = min(t1, t2), max(t1, t2)
    for k in range(len(eps) - 1):
        a, b = oracle.ideal_delay(tr, k, lo), oracle.ideal_delay(tr, k, hi)
        if a is not None:
            assert b is not None and b <= a


# -- ultimate accuracy -------------------------------------------------------------------

def test_ultimate_index_strict_plateau():
    eps = np.concatenate([10.0 ** -np.arange(10), np.full(15, 1e-9)])
    assert oracle.ultimate_index(eps) == 9


def test_ultimate_index_noisy_plateau_needs_rtol():
    rng = np.random.default_rng(0)
    plateau = 1e-20 * (1 + 0.01 * rng.standard_normal(40)) * np.linspace(1, 0.9, 40)
    eps = np.concatenate([10.0 ** -np.arange(20), plateau])
    assert oracle.ultimate_index(eps) > 20
    assert oracle.ultimate_index(eps, rtol=0.1, confirm=True) in (19, 20)


def test_ultimate_index_confirm_skips_transient_stagnation():
    eps = np.concatenate([np.full(12, 1.0), 10.0 ** -np.arange(1, 10)])
    assert oracle.ultimate_index(eps) == 0
    assert oracle.ultimate_index(eps, confirm=True) == len(eps) - 1


def test_ultimate_level_index_keeps_margin():
    eps = np.concatenate([10.0 ** -np.arange(20), np.full(15, 1e-19)])
    assert oracle.ultimate_level_index(eps) == 17


def test_strictly_decreasing_before_ultimate():
    A = problems.spectrum_matrix(problems.geometric_spectrum(1, 1e3, 80))
    b = np.ones(80) / np.sqrt(80)
    x = oracle.direct_solve(A, b)
    tr = oracle.ErrorTracker(A, x)
    adaptive_pcg(A, b, on_event=lambda ev, s, batch: ev is not None and tr(ev, s), residual_floor=1e-30,
                 max_iter=400)
    eps = np.array(tr.eps)
    ku = oracle.ultimate_level_index(eps)
    assert ku < len(eps) - 10
    assert np.all(np.diff(eps[:ku + 1]) < 0)


# -- eigenvalue references --------------------------------------------------------------------

def test_eig_extremes_diag13():
    e = oracle.eig_extremes(D13)
    assert (e.lambda_min, e.lambda_max) == pytest.approx((1.0, 3.0), rel=1e-15)
    assert e.mu == pytest.approx(1 / 1.0001, rel=1e-15)


def test_eig_extremes_identity():
    e = oracle.eig_extremes(CsrMatrix.diag(np.ones(5)))
    assert e.lambda_min == pytest.approx(1.0) and e.lambda_max == pytest.approx(1.0)


def test_eig_extremes_jacobi_scaling():
    A = problems.random_sparse_spd(40, 0.1, seed=2, diag_scale=2.0)
    P = build_jacobi(A)
    d = np.sqrt(A.diagonal())
    w = np.linalg.eigvalsh(A.toarray() / np.outer(d, d))
    e = oracle.eig_extremes(A, P)
    assert e.lambda_min == pytest.approx(w[0], rel=1e-12)
    assert e.lambda_max == pytest.approx(w[-1], rel=1e-12)


def test_eigenbasis_rhs_has_equal_components():
    A = problems.spectrum_matrix(problems.geometric_spectrum(1, 10, 6), "dense", seed=1)
    b = oracle.eigenbasis_rhs(A)
    _, V = np.linalg.eigh(A.toarray())
    c = np.abs(V.T @ b)
    assert np.allclose(c, c[0], rtol=1e-12) and np.linalg.norm(b) == pytest.approx(1.0)


# -- bound quality ---------------------------------------------------------------------------

def test_bound_quality_exact_termination():
    tr = trace([4 / 3, 1 / 3, 0.0], ku=2)
    acc = [AcceptedEstimate(0, 1, 4 / 3, 4 / 3, 16 / 9)]
    q = oracle.bound_quality(tr, acc, 0.25, only_before_ultimate=False)
    assert q.rel_lower[0] == 0.0


def test_bound_quality_boundary_counts_as_met():
    tr = trace([1.0, 0.5, 0.1, 0.01])
    acc = [AcceptedEstimate(0, 0, 0.75, 0.8, 1.0)]
    q = oracle.bound_quality(tr, acc, 0.25)
    assert q.rel_lower[0] == 0.25
    assert q.summary["fraction_within_tau"] == 1.0


def test_bound_quality_filters_estimates_reaching_the_plateau():
    tr = trace([1.0, 0.1, 0.01, 0.001], ku=2)
    acc = [AcceptedEstimate(0, 0, 0.9, 0.99, 1.2), AcceptedEstimate(1, 1, 0.099, 0.099, 0.13)]
    assert oracle.bound_quality(tr, acc, 0.25).k.tolist() == [0]


def test_bound_quality_rejects_misaligned():
    tr = trace([1.0, 0.1, 0.01])
    acc = [AcceptedEstimate(1, 0, 0.09, 0.09, 0.12), AcceptedEstimate(0, 0, 0.9, 0.9, 1.2)]
    with pytest.raises(ValueError):
        oracle.bound_quality(tr, acc, 0.25)


def test_omega_quality_nonnegative_with_safe_node():
    A = problems.random_sparse_spd(50, 0.1, seed=4, diag_scale=2.0)
    b = np.random.default_rng(4).uniform(-1, 1, 50)
    ext = oracle.eig_extremes(A)
    x = oracle.direct_solve(A, b)
    tr = oracle.ErrorTracker(A, x)
    res = adaptive_pcg(A, b, mu=ext.mu, on_event=lambda ev, s, batch: ev is not None and tr(ev, s))
    q = oracle.bound_quality(oracle.truth_trace(tr.eps, ext), res.accepted, 0.25)
    assert q.k.size > 5
    assert np.all(q.rel_omega[np.isfinite(q.rel_omega)] >= 0)


def test_upper_based_delays_overshoot_is_possible():
    terms = 0.5 ** np.arange(30)
    eps = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
    d = oracle.upper_based_delays(terms, 2 * eps[:-1], 0.25)
    tr = trace(eps[:-1])
    ideal = [oracle.ideal_delay(tr, k, 0.25) for k in range(len(d))]
    assert all(a >= i for a, i in zip(d, ideal) if i is not None)
