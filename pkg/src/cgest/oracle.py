"""Dense ground truth for desk-scale problems.

Everything here is O(n^3) and capped by ``DEFAULT_CAP`` (override with the
``CGEST_ORACLE_CAP`` environment variable).  Nothing in the solver or the
estimator depends on this module.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .precond import Preconditioner
from .sparse import CsrMatrix, DimensionError, matvec

__all__ = [
    "DEFAULT_CAP",
    "OracleCapExceeded",
    "TruthTrace",
    "ErrorTracker",
    "Extremes",
    "oracle_cap",
    "direct_solve",
    "true_error",
    "ultimate_index",
    "ultimate_level_index",
    "truth_trace",
    "ideal_delay",
    "ideal_delays",
    "eig_extremes",
    "eigenbasis_rhs",
    "bound_quality",
    "upper_based_delays",
]

DEFAULT_CAP = 5000


class OracleCapExceeded(ValueError):
    pass


def oracle_cap() -> int:
    return int(os.environ.get("CGEST_ORACLE_CAP", DEFAULT_CAP))


def _check_cap(n, cap):
    cap = oracle_cap() if cap is None else cap
    if n > cap:
        raise OracleCapExceeded(f"order {n} exceeds the dense oracle cap {cap}")


def direct_solve(A: CsrMatrix, b, cap: Optional[int] = None, refine: int = 2) -> np.ndarray:
    """Dense Cholesky solve with ``refine`` steps of iterative refinement.

    Refinement residuals are accumulated in ``numpy.longdouble`` so the
    result is accurate well beyond ``eps * cond(A)`` where the platform
    provides extended precision.  Raises ``numpy.linalg.LinAlgError`` if
    ``A`` is not SPD and ``ArithmeticError`` if ``||b - A x|| / ||b|| > 1e-10``.
    """
    _check_cap(A.n, cap)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n,):
        raise DimensionError("right-hand side does not match the matrix order")
    dense = A.toarray()
    try:
        cf = sla.cho_factor(dense, lower=True, check_finite=True)
    except sla.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"matrix is not SPD: {exc}") from None
    x = sla.cho_solve(cf, b)
    if refine:
        Al = A.to_scipy().astype(np.longdouble)
        bl = b.astype(np.longdouble)
        for _ in range(refine):
            res = bl - Al @ x.astype(np.longdouble)
            dx = sla.cho_solve(cf, res.astype(np.float64))
            x = (x.astype(np.longdouble) + dx.astype(np.longdouble)).astype(np.float64)
    relres = np.linalg.norm(b - matvec(A, x)) / np.linalg.norm(b)
    if not relres <= 1e-10:
        raise ArithmeticError(f"direct solve residual {relres:.2e} exceeds 1e-10")
    return x


def true_error(A: CsrMatrix, x_true, x_k) -> float:
    """``(x - x_k)^T A (x - x_k)``."""
    e = np.asarray(x_true, dtype=np.float64) - np.asarray(x_k, dtype=np.float64)
    return float(np.dot(e, matvec(A, e)))


def ultimate_index(eps: Sequence[float], window: int = 10, rtol: float = 0.0, confirm: bool = False) -> int:
    """First ``k`` after which ``eps`` does not decrease within ``window`` steps.

    A decrease only counts when it exceeds the fraction ``rtol`` of
    ``eps[k]``.  In floating point the true error keeps drifting down by
    rounding noise on its plateau, so measured traces want ``rtol > 0``.
    With ``confirm`` the stagnation must also persist for the whole rest of
    the trace, which keeps transient stagnation (slow starts, staircases)
    from being mistaken for the final plateau.  An index with no successors
    counts as stagnated, so a trace that ends while still decreasing gets
    ``len(eps) - 1``.
    """
    eps = np.asarray(eps, dtype=np.float64)
    n = len(eps)
    # suffix minima of eps[k+1:]
    tail_min = np.full(n, np.inf)
    if n > 1:
        tail_min[:-1] = np.minimum.accumulate(eps[::-1])[::-1][1:]
    for k in range(n):
        nxt = eps[k + 1:k + 1 + window]
        bar = eps[k] * (1.0 - rtol)
        if nxt.size == 0 or not np.min(nxt) < bar:
            if not confirm or not tail_min[k] < bar:
                return k
    return n


@dataclass
class TruthTrace:
    """True errors of one run plus spectral data of the (preconditioned) operator."""

    eps: np.ndarray
    ultimate_index: int
    lambda_min: float
    lambda_max: float

    @property
    def eps_anorm(self) -> np.ndarray:
        return np.sqrt(self.eps)

    @property
    def kappa(self) -> float:
        return self.lambda_max / self.lambda_min


class ErrorTracker:
    """Solver callback that records ``eps_k`` for every iterate.

    ``eps[0]`` comes from ``x0``; the event for iteration ``k`` arrives with
    the state already holding ``x_{k+1}``.
    """

    def __init__(self, A: CsrMatrix, x_true, x0=None):
        self.A = A
        self.x_true = np.asarray(x_true, dtype=np.float64)
        x0 = np.zeros(A.n) if x0 is None else x0
        self.eps: List[float] = [true_error(A, self.x_true, x0)]

    def __call__(self, event, state):
        self.eps.append(true_error(self.A, self.x_true, state.x))
        return False


PLATEAU_RTOL = 0.1
LEVEL_MARGIN = 100.0


def ultimate_level_index(eps, window: int = 10, rtol: float = PLATEAU_RTOL, margin: float = LEVEL_MARGIN) -> int:
    """Where a measured trace reaches its ultimate level of accuracy.

    The plateau is found by :func:`ultimate_index` with confirmation; its
    level is the smallest error seen on it.  The returned index is the first
    ``k`` with ``eps[k] <= margin * level``, or the plateau start if that
    comes first.  Close to the floor rounding noise is a sizeable part of
    ``eps_k`` itself, which is why a margin is kept.
    """
    eps = np.asarray(eps, dtype=np.float64)
    ku = ultimate_index(eps, window, rtol, confirm=True)
    if ku >= len(eps) or margin <= 0:
        return ku
    level = float(np.min(eps[ku:]))
    hit = np.flatnonzero(eps[:ku] <= margin * level)
    return int(hit[0]) if hit.size else ku


def truth_trace(eps, extremes: "Extremes", window: int = 10, rtol: float = PLATEAU_RTOL,
                margin: float = LEVEL_MARGIN) -> TruthTrace:
    """Bundle a measured error trace with :func:`ultimate_level_index`."""
    eps = np.asarray(eps, dtype=np.float64)
    return TruthTrace(eps, ultimate_level_index(eps, window, rtol, margin), extremes.lambda_min, extremes.lambda_max)


def ideal_delay(trace: TruthTrace, k: int, tau: float) -> Optional[int]:
    """Smallest ``d >= 0`` with ``eps_{k+d+1} / eps_k <= tau``.

    Only indices up to the ultimate index are consulted; ``None`` when no
    such ``d`` exists there.
    """
    eps = trace.eps
    last = min(trace.ultimate_index, len(eps) - 1)
    if not 0 <= k < last:
        return None
    for j in range(k + 1, last + 1):
        if eps[j] / eps[k] <= tau:
            return j - k - 1
    return None


def ideal_delays(trace: TruthTrace, tau: float) -> List[Optional[int]]:
    """:func:`ideal_delay` for every ``k`` before the ultimate index."""
    eps = trace.eps
    last = min(trace.ultimate_index, len(eps) - 1)
    out: List[Optional[int]] = []
    for k in range(last):
        out.append(ideal_delay(trace, k, tau))
    return out


class Extremes(NamedTuple):
    lambda_min: float
    lambda_max: float
    mu: float  # lambda_min / (1 + 1e-4), a safe Gauss--Radau node


def _preconditioned_dense(A: CsrMatrix, P: Optional[Preconditioner]) -> np.ndarray:
    dense = A.toarray()
    if P is None or P.kind == "identity":
        return dense
    if P.kind == "jacobi":
        s = np.sqrt(P.diag_inv)
        return s[:, None] * dense * s[None, :]
    L = P.factor().toarray()
    Y = sla.solve_triangular(L, dense, lower=True)
    Ahat = sla.solve_triangular(L, Y.T, lower=True)
    return 0.5 * (Ahat + Ahat.T)


def eig_extremes(A: CsrMatrix, P: Optional[Preconditioner] = None, cap: Optional[int] = None) -> Extremes:
    """Extreme eigenvalues of ``A`` or of ``L^{-1} A L^{-T}`` for ``M = L L^T``."""
    _check_cap(A.n, cap)
    w = sla.eigvalsh(_preconditioned_dense(A, P))
    lmin, lmax = float(w[0]), float(w[-1])
    return Extremes(lmin, lmax, lmin / (1.0 + 1e-4))


def eigenbasis_rhs(A: CsrMatrix, cap: Optional[int] = None) -> np.ndarray:
    """Unit-norm ``b`` with equal components in the eigenvector basis of ``A``."""
    _check_cap(A.n, cap)
    _, V = sla.eigh(A.toarray())
    b = V @ np.ones(A.n)
    return b / np.linalg.norm(b)


# -- quality of bounds -------------------------------------------------------

@dataclass
class BoundQuality:
    """Per-``k`` relative errors and summary figures of one run."""

    k: np.ndarray
    d: np.ndarray
    ideal_d: List[Optional[int]]
    eps: np.ndarray
    rel_lower: np.ndarray
    rel_upper: np.ndarray
    rel_omega: np.ndarray
    tau: float
    summary: dict = field(default_factory=dict)


def bound_quality(trace: TruthTrace, accepted, tau: float, only_before_ultimate: bool = True) -> BoundQuality:
    """Compare accepted estimates against the truth.

    ``rel_lower`` is ``(eps_k - delta)/eps_k``, ``rel_upper`` is
    ``(delta/(1-tau) - eps_k)/eps_k`` and ``rel_omega`` is
    ``(Omega - eps_k)/eps_k`` (NaN where no Gauss--Radau value exists).
    """
    rows = [a for a in accepted if a.k < len(trace.eps)]
    if only_before_ultimate:
        rows = [a for a in rows if a.k + a.d_used < trace.ultimate_index]
    ks = np.array([a.k for a in rows], dtype=int)
    if ks.size and np.any(np.diff(ks) <= 0):
        raise ValueError("accepted estimates are not strictly ordered by k")
    eps = trace.eps[ks] if ks.size else np.array([])
    delta = np.array([a.delta for a in rows])
    upper = np.array([a.upper_heuristic for a in rows])
    omega = np.array([np.nan if a.omega is None else a.omega for a in rows])
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_lower = (eps - delta) / eps
        rel_upper = (upper - eps) / eps
        rel_omega = (omega - eps) / eps
    ideal = [ideal_delay(trace, int(k), tau) for k in ks]
    d = np.array([a.d_used for a in rows], dtype=int)
    summary = {}
    if ks.size:
        summary["count"] = int(ks.size)
        summary["fraction_within_tau"] = float(np.mean(rel_lower <= tau))
        summary["median_rel_lower"] = float(np.median(rel_lower))
        summary["max_rel_lower"] = float(np.max(rel_lower))
        summary["quantiles_rel_lower"] = [float(q) for q in np.quantile(rel_lower, [0.1, 0.5, 0.9])]
        gaps = [int(dk) - i for dk, i in zip(d, ideal) if i is not None]
        if gaps:
            summary["median_d_gap"] = float(np.median(gaps))
            summary["fraction_d_at_least_ideal"] = float(np.mean(np.array(gaps) >= 0))
        if np.any(np.isfinite(rel_omega)):
            summary["min_rel_omega"] = float(np.nanmin(rel_omega))
    return BoundQuality(ks, d, ideal, eps, rel_lower, rel_upper, rel_omega, tau, summary)


def upper_based_delays(terms: Sequence[float], upper: Sequence[float], tau: float) -> List[int]:
    """Delays from replacing ``eps_{k+d+1}`` by an upper estimate ``upper[k+d+1]``.

    Returns, for each ``k`` where one exists, the smallest ``d`` with
    ``upper[k+d+1] / delta(k, k+d) <= tau``.  This is only a comparator for
    the adaptive controller; it tends to pick delays larger than needed.
    """
    terms = np.asarray(terms, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    out = []
    n = len(terms)
    for k in range(n - 1):
        partial = np.cumsum(terms[k:n - 1])
        ratio = upper[k + 1:n] / partial
        hit = np.flatnonzero(ratio <= tau)
        if hit.size == 0:
            break
        out.append(int(hit[0]))
    return out
