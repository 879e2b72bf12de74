r"""Estimates of the squared A-norm of the (P)CG error.

The workhorse is the identity

.. math::

    \varepsilon_k = \sum_{j=k}^{k+d} \gamma_j z_j^T r_j + \varepsilon_{k+d+1},

so the partial sum :math:`\Delta_{k:k+d}` is a lower bound on
:math:`\varepsilon_k = \|x - x_k\|_A^2` that tightens as the delay ``d``
grows.  :class:`ErrorEstimator` chooses ``d`` adaptively so that the relative
error of the bound stays below a tolerance ``tau``, optionally starting with a
Ritz-value based initial phase, and can additionally track a Gauss--Radau
upper bound when an underestimate of the smallest eigenvalue is known.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .solver import BreakdownError, IterationEvent, SolveResult, run

__all__ = [
    "NonPositiveTermError",
    "GaussRadauError",
    "TermHistory",
    "AdaptiveState",
    "RitzState",
    "GaussRadauState",
    "AcceptedEstimate",
    "StoppingPolicy",
    "ErrorEstimator",
    "EstimatedSolve",
    "push_term",
    "delta_range",
    "find_window_start",
    "safety_factor",
    "adaptive_step",
    "ideal_ratio_check",
    "ritz_update",
    "phi",
    "initial_phase_step",
    "gauss_radau_update",
    "omega_bound",
    "heuristic_upper",
    "xnormA_estimate",
    "stop_decision",
    "adaptive_pcg",
]


class NonPositiveTermError(ArithmeticError):
    """A term ``gamma_j z_j^T r_j`` was not strictly positive."""


class GaussRadauError(ArithmeticError):
    """The Gauss--Radau recurrence broke down (the node ``mu`` exceeds ``lambda_min``)."""


# -- term history ----------------------------------------------------------

def _two_sum(a: float, b: float):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


class TermHistory:
    """Terms ``gamma_j z_j^T r_j`` with double-double prefix sums.

    ``delta(a, b)`` is a difference of two prefix sums.  Whenever that
    difference is so small against the running total that even double-double
    precision would be stressed, it is recomputed with :func:`math.fsum`.
    """

    _FALLBACK = 1e-10

    def __init__(self):
        self.terms: List[float] = []
        self._hi: List[float] = []
        self._lo: List[float] = []

    def __len__(self):
        return len(self.terms)

    def push(self, term: float) -> None:
        term = float(term)
        if not term > 0 or not math.isfinite(term):
            raise NonPositiveTermError(f"term {len(self.terms)} = {term!r} is not positive")
        hi, lo = (self._hi[-1], self._lo[-1]) if self.terms else (0.0, 0.0)
        s, e = _two_sum(hi, term)
        lo += e
        hi = s + lo
        lo -= hi - s
        self.terms.append(term)
        self._hi.append(hi)
        self._lo.append(lo)

    def prefix(self, j: int) -> float:
        return self._hi[j] + self._lo[j]

    def delta(self, a: int, b: int) -> float:
        """``sum(terms[a:b+1])``."""
        if not 0 <= a <= b < len(self.terms):
            raise IndexError(f"range [{a}, {b}] outside 0..{len(self.terms) - 1}")
        if a == b:
            return self.terms[a]
        hb, lb = self._hi[b], self._lo[b]
        ha, la = (self._hi[a - 1], self._lo[a - 1]) if a else (0.0, 0.0)
        s, e = _two_sum(hb, -ha)
        val = s + (e + (lb - la))
        if val < self._FALLBACK * hb:
            return math.fsum(self.terms[a:b + 1])
        return val


def push_term(h: TermHistory, ev: IterationEvent) -> None:
    if ev.k != len(h):
        raise ValueError(f"event {ev.k} pushed out of order (expected {len(h)})")
    h.push(ev.gamma * ev.rz)


def delta_range(h: TermHistory, a: int, b: int) -> float:
    return h.delta(a, b)


def find_window_start(h: TermHistory, k: int, ell_max: int, tol: float = 1e-4) -> int:
    """Largest ``l < k`` with ``delta(k, ell_max) / delta(l, ell_max) <= tol``, else 0.

    The ratio grows with ``l`` so the admissible ``l`` form a prefix of
    ``0..k-1``; found by bisection.
    """
    if k <= 0:
        return 0
    num = h.delta(k, ell_max)

    def ok(l):
        return num / h.delta(l, ell_max) <= tol

    if not ok(0):
        return 0
    lo, hi = 0, k - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def safety_factor(h: TermHistory, m: int, k: int, d: int) -> float:
    """``max_{m <= l <= k+d} delta(l, k+d+1) / term_l``; always at least 1."""
    last = k + d + 1
    return max(h.delta(l, last) / h.terms[l] for l in range(m, k + d + 1))


# -- adaptive choice of the delay -------------------------------------------

@dataclass
class AcceptedEstimate:
    """Accepted lower bound for ``eps_k`` obtained with delay ``d_used``.

    ``delta`` is the sum over ``k..k+d``; ``delta_plus`` also includes the
    newest term and is the better value for practical use.
    """

    k: int
    d_used: int
    delta: float
    delta_plus: float
    upper_heuristic: float
    omega: Optional[float] = None
    final: bool = False


@dataclass
class AdaptiveState:
    """Controller state.  ``k`` is the oldest iteration without an estimate."""

    tau: float = 0.25
    window_tol: float = 1e-4
    d_min: int = 0
    k: int = 0
    d: int = 0
    S: float = float("nan")
    m: int = 0
    initial: bool = False

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if not self.window_tol > 0:
            raise ValueError("window_tol must be positive")
        if self.d_min < 0:
            raise ValueError("d_min must be nonnegative")


def heuristic_upper(delta: float, tau: float) -> float:
    return delta / (1.0 - tau)


def adaptive_step(
    st: AdaptiveState,
    h: TermHistory,
    ell: int,
    omega: Optional[Callable[[int, int], Optional[float]]] = None,
) -> List[AcceptedEstimate]:
    """Process the term of outer iteration ``ell`` and accept what is accurate enough.

    Recomputes the window start ``m`` and the safety factor ``S`` once, then
    accepts ``delta(k, k+d)`` for ``eps_k`` while ``d >= d_min`` and
    ``S * term_ell / delta(k, k+d) <= tau``, moving ``k`` forward and ``d``
    back; finally ``d`` grows by one.
    """
    if ell < 1:
        return []
    if st.k + st.d != ell - 1:
        raise RuntimeError(f"controller out of step: k={st.k}, d={st.d}, ell={ell}")
    st.m = find_window_start(h, st.k, ell, st.window_tol)
    st.S = safety_factor(h, st.m, st.k, st.d)
    newest = h.terms[ell]
    out = []
    while st.d >= st.d_min:
        delta = h.delta(st.k, st.k + st.d)
        if not st.S * newest / delta <= st.tau:
            break
        om = omega(st.k, st.d) if omega is not None else None
        out.append(AcceptedEstimate(st.k, st.d, delta, h.delta(st.k, ell), heuristic_upper(delta, st.tau), om))
        st.k += 1
        st.d -= 1
    st.d += 1
    return out


def ideal_ratio_check(eps_k: float, eps_kd1: float, tau: float) -> bool:
    """``eps_{k+d+1} / eps_k <= tau``, the condition defining the ideal delay."""
    return eps_kd1 / eps_k <= tau


# -- smallest Ritz value and the phi heuristic -------------------------------

@dataclass
class RitzState:
    """Incremental estimate ``mu = 1/rho`` of the smallest Ritz value.

    ``tau_inc`` is the recurrence variable, unrelated to the tolerance.
    ``pi`` tracks ``||r_k||^2 / ||p_k||^2`` (hatted quantities under PCG).
    """

    k: int = -1
    rho: float = float("nan")
    tau_inc: float = float("nan")
    sigma: float = 0.0
    s: float = 0.0
    c: float = 1.0
    chi: float = 0.0
    mu: float = float("nan")
    pi: float = 1.0
    gamma_prev: float = float("nan")
    beta_pending: float = float("nan")


def ritz_update(rs: RitzState, ev: IterationEvent) -> None:
    if ev.k != rs.k + 1:
        raise ValueError(f"Ritz recurrence fed event {ev.k} after {rs.k}")
    g = ev.gamma
    if ev.k == 0:
        rs.rho = g
        rs.tau_inc = g
        rs.sigma, rs.s, rs.c, rs.chi, rs.pi = 0.0, 0.0, 1.0, 0.0, 1.0
    else:
        b = rs.beta_pending
        gp = rs.gamma_prev
        sigma = -math.sqrt(g * b / gp) * (rs.s * rs.sigma + rs.c * rs.tau_inc)
        tau = g * (b * rs.tau_inc / gp + 1.0)
        gap = rs.rho - tau
        chi = math.sqrt(gap * gap + 4.0 * sigma * sigma)
        if chi > 0:
            c2 = min(1.0, max(0.0, 0.5 * (1.0 - gap / chi)))
        else:
            c2 = 0.5
        rs.rho = rs.rho + chi * c2
        rs.s = math.sqrt(1.0 - c2)
        rs.c = math.sqrt(c2) * float(np.sign(sigma))
        rs.sigma, rs.tau_inc, rs.chi = sigma, tau, chi
        rs.pi = rs.pi / (rs.pi + b)
    rs.mu = 1.0 / rs.rho
    rs.gamma_prev = g
    rs.beta_pending = ev.beta_next
    rs.k = ev.k


def phi(rs: RitzState, ev: IterationEvent) -> float:
    """``(pi_k / mu_k) * z_k^T r_k``, an eigenvalue-free proxy for an upper bound on ``eps_k``."""
    if rs.k != ev.k:
        raise ValueError("Ritz state not updated through this iteration")
    return rs.pi / rs.mu * ev.rz


def initial_phase_step(st: AdaptiveState, rs: RitzState, h: TermHistory, ev: IterationEvent) -> bool:
    """One step of the initial phase at ``ell == d``; True once ``phi_d / delta(0, d) < tau``."""
    if not st.initial:
        raise RuntimeError("initial phase is not active")
    if st.d != ev.k:
        raise RuntimeError(f"initial phase out of step: d={st.d}, ell={ev.k}")
    if phi(rs, ev) / h.delta(0, st.d) < st.tau:
        st.initial = False
        return True
    st.d += 1
    return False


# -- Gauss--Radau upper bound --------------------------------------------------

@dataclass
class GaussRadauState:
    """Modified coefficients ``gamma^(mu)_j`` for a prescribed node ``0 < mu <= lambda_min``."""

    mu_fixed: float
    gamma_mu: float = float("nan")
    omegas: List[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.mu_fixed > 0:
            raise ValueError("Gauss-Radau node must be positive")
        self.gamma_mu = 1.0 / self.mu_fixed


def gauss_radau_update(gr: GaussRadauState, gamma: float, beta_next: float) -> None:
    """Advance ``gamma^(mu)_j`` to ``gamma^(mu)_{j+1}`` from ``gamma_j`` and ``beta_{j+1}``."""
    num = gr.gamma_mu - gamma
    den = gr.mu_fixed * num + beta_next
    if not den > 0:
        raise GaussRadauError(f"denominator {den!r} <= 0; mu={gr.mu_fixed!r} is too large")
    g = num / den
    if not g > 0:
        raise GaussRadauError(f"modified coefficient {g!r} <= 0; mu={gr.mu_fixed!r} is too large")
    gr.gamma_mu = g


def omega_bound(h: TermHistory, gr: GaussRadauState, k: int, d: int) -> float:
    """``delta(k, k+d-1) + omega_{k+d}``; for ``d = 0`` just ``omega_k``."""
    if d == 0:
        return gr.omegas[k]
    return h.delta(k, k + d - 1) + gr.omegas[k + d]


# -- relative quantities and stopping ---------------------------------------

def xnormA_estimate(h: TermHistory, ell: int, b, x0, r0) -> float:
    """Lower estimate of ``||x||_A^2`` from ``||x - x0||_A^2 + b^T x0 + r0^T x0``.

    Not clamped: an unlucky ``x0`` can make the value negative.
    """
    return h.delta(0, ell) + float(np.dot(b, x0)) + float(np.dot(r0, x0))


@dataclass(frozen=True)
class StoppingPolicy:
    """``absolute``: stop when ``sqrt(upper) <= threshold``.
    ``relative``: stop when ``upper / ||x||_A^2 <= threshold**2``.
    """

    kind: str = "absolute"
    threshold: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("absolute", "relative"):
            raise ValueError(f"unknown stopping policy {self.kind!r}")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")


def stop_decision(est: Optional[AcceptedEstimate], policy: StoppingPolicy, xnorm: Optional[float] = None) -> bool:
    if est is None:
        return False
    if policy.kind == "absolute":
        return math.sqrt(est.upper_heuristic) <= policy.threshold
    if xnorm is None or not xnorm > 0:
        return False
    return est.upper_heuristic / xnorm <= policy.threshold ** 2


# -- driver ------------------------------------------------------------------

class ErrorEstimator:
    """Consumes :class:`IterationEvent` objects and emits accepted estimates.

    Parameters mirror the controller: tolerance ``tau``, window tolerance
    ``window_tol``, the floor ``d_min``, ``initial_phase`` to choose the first
    delay from ``phi`` and ``mu`` to enable Gauss--Radau bounds.
    """

    def __init__(self, tau=0.25, window_tol=1e-4, d_min=0, initial_phase=False, mu=None):
        self.state = AdaptiveState(tau=tau, window_tol=window_tol, d_min=d_min, initial=initial_phase)
        self.history = TermHistory()
        self.ritz = RitzState()
        self.radau = GaussRadauState(mu) if mu is not None else None
        self.accepted: List[AcceptedEstimate] = []
        self.mu_history: List[float] = []
        self.phi_history: List[float] = []
        self.d0: Optional[int] = None if initial_phase else 0
        self._pending_radau = None

    @property
    def ell(self) -> int:
        return len(self.history) - 1

    def push(self, ev: IterationEvent) -> List[AcceptedEstimate]:
        push_term(self.history, ev)
        ritz_update(self.ritz, ev)
        self.mu_history.append(self.ritz.mu)
        self.phi_history.append(phi(self.ritz, ev))
        if self.radau is not None:
            self._radau_step(ev)
        st = self.state
        if st.initial:
            if initial_phase_step(st, self.ritz, self.history, ev):
                self.d0 = st.d
            return []
        batch = adaptive_step(st, self.history, ev.k, self._omega if self.radau is not None else None)
        self.accepted.extend(batch)
        return batch

    def _radau_step(self, ev):
        gr = self.radau
        try:
            if self._pending_radau is not None:
                gauss_radau_update(gr, *self._pending_radau)
        except GaussRadauError as exc:
            warnings.warn(f"Gauss-Radau bound disabled: {exc}", RuntimeWarning, stacklevel=3)
            self.radau = None
            return
        gr.omegas.append(gr.gamma_mu * ev.rz)
        self._pending_radau = (ev.gamma, ev.beta_next)

    def _omega(self, k, d):
        if self.radau is None or k + d >= len(self.radau.omegas):
            return None
        return omega_bound(self.history, self.radau, k, d)

    def finalize(self) -> List[AcceptedEstimate]:
        """Accept every pending iteration with all available terms.

        Meant for runs that ended because the residual vanished, when the
        remaining error is negligible.
        """
        st = self.state
        out = []
        last = self.ell
        while st.k <= last:
            delta = self.history.delta(st.k, last)
            d = last - st.k
            out.append(AcceptedEstimate(st.k, d, delta, delta, heuristic_upper(delta, st.tau), self._omega(st.k, d), True))
            st.k += 1
        st.d = last - st.k
        st.initial = False
        self.accepted.extend(out)
        return out

    def latest(self) -> Optional[AcceptedEstimate]:
        return self.accepted[-1] if self.accepted else None


@dataclass
class EstimatedSolve:
    result: SolveResult
    estimator: ErrorEstimator
    stopped_by_estimate: bool

    @property
    def x(self):
        return self.result.x

    @property
    def accepted(self):
        return self.estimator.accepted


def adaptive_pcg(
    A,
    b,
    x0=None,
    P=None,
    *,
    tau=0.25,
    window_tol=1e-4,
    d_min=0,
    initial_phase=False,
    mu=None,
    stop: Optional[StoppingPolicy] = None,
    max_iter=None,
    on_event=None,
    residual_floor=None,
) -> EstimatedSolve:
    """PCG with adaptive error estimation and an optional estimate-based stop.

    ``on_event(event, state, batch)`` sees every iteration together with the
    estimates accepted in it.  When the residual is exhausted the pending
    estimates are flushed with :meth:`ErrorEstimator.finalize`.  A
    :class:`BreakdownError` propagates with the estimator attached as its
    ``estimator`` attribute.
    """
    est = ErrorEstimator(tau, window_tol, d_min, initial_phase, mu)
    b = np.asarray(b, dtype=np.float64)
    flags = {"stop": False}
    xnorm_shift = [0.0]

    def callback(ev, state):
        if ev.k == 0:
            x0_ = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=np.float64)
            r0 = b - A @ x0_
            xnorm_shift[0] = float(np.dot(b, x0_)) + float(np.dot(r0, x0_))
        batch = est.push(ev)
        if on_event is not None:
            on_event(ev, state, batch)
        if stop is not None and batch:
            xnorm = est.history.delta(0, ev.k) + xnorm_shift[0]
            if stop_decision(est.latest(), stop, xnorm):
                flags["stop"] = True
                return True
        return False

    kw = {} if residual_floor is None else {"residual_floor": residual_floor}
    try:
        result = run(A, b, x0, P, max_iter=max_iter, callback=callback, **kw)
    except BreakdownError as exc:
        exc.estimator = est  # estimates accepted so far stay reachable
        raise
    if result.reason == "residual" and len(est.history):
        batch = est.finalize()
        if on_event is not None and batch:
            on_event(None, result.state, batch)
    return EstimatedSolve(result, est, flags["stop"])
