"""Hestenes--Stiefel (P)CG with a per-iteration coefficient stream.

Each call of :func:`cg_iter` performs one update and returns an
:class:`IterationEvent` describing iteration ``k`` *before* the update, i.e.
the coefficient ``gamma_k`` together with ``z_k^T r_k``.  Their product is
the ``k``-th term of the error identity used by the estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .precond import Preconditioner, apply, identity
from .sparse import CsrMatrix, DimensionError, matvec

__all__ = [
    "SolverState",
    "IterationEvent",
    "SolveResult",
    "BreakdownError",
    "init",
    "cg_iter",
    "iterate",
    "run",
]

EPS = np.finfo(np.float64).eps


class BreakdownError(ArithmeticError):
    """Loss of positive definiteness (``p^T A p <= 0`` or ``z^T r <= 0``).

    ``state`` holds the iterate bundle at the moment of failure.
    """

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass
class SolverState:
    """Iterate bundle of (P)CG after ``k`` completed iterations."""

    k: int
    x: np.ndarray
    r: np.ndarray
    p: np.ndarray
    z: np.ndarray
    rz: float
    gamma: float = float("nan")
    beta: float = float("nan")
    pAp: float = float("nan")
    bnorm2: float = 1.0
    converged: bool = False

    @property
    def rnorm2(self) -> float:
        return float(np.dot(self.r, self.r))


@dataclass(frozen=True)
class IterationEvent:
    """Coefficients of iteration ``k``.

    ``rz`` is ``z_k^T r_k`` (``||r_k||^2`` without preconditioning),
    ``rnorm2`` and ``pnorm2`` are Euclidean norms of the unpreconditioned
    vectors and ``beta_next`` is ``beta_{k+1}``.
    """

    k: int
    gamma: float
    rz: float
    rnorm2: float
    pnorm2: float
    beta_next: float

    @property
    def term(self) -> float:
        return self.gamma * self.rz


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    reason: str  # "callback", "residual", "max_iter" or "converged"
    state: SolverState = field(repr=False)


def init(A: CsrMatrix, b, x0=None, P: Optional[Preconditioner] = None) -> SolverState:
    """Set up ``r_0 = b - A x_0``, ``z_0 = M^{-1} r_0`` and ``p_0 = z_0``.

    A zero initial residual yields a state flagged ``converged``; a
    nonpositive ``r_0^T z_0`` otherwise means the preconditioner is not SPD.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n,):
        raise DimensionError(f"right-hand side of length {b.shape} does not match order {A.n}")
    x = np.zeros(A.n) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (A.n,):
        raise DimensionError(f"initial guess of length {x.shape} does not match order {A.n}")
    if P is None:
        P = identity(A.n)
    r = b - matvec(A, x)
    z = apply(P, r)
    rz = float(np.dot(z, r))
    state = SolverState(k=0, x=x, r=r, p=z.copy(), z=z, rz=rz, bnorm2=float(np.dot(b, b)))
    if not np.any(r):
        state.converged = True
    elif not rz > 0:
        raise BreakdownError(f"r_0^T M^-1 r_0 = {rz!r} is not positive; preconditioner not SPD", state)
    return state


def cg_iter(state: SolverState, A: CsrMatrix, P: Optional[Preconditioner] = None) -> IterationEvent:
    """One Hestenes--Stiefel step; mutates ``state`` and returns the event for ``k``."""
    if state.converged:
        raise RuntimeError("solver state is already converged")
    if P is None:
        P = identity(A.n)
    p, r = state.p, state.r
    Ap = matvec(A, p)
    pAp = float(np.dot(p, Ap))
    if not pAp > 0:
        raise BreakdownError(f"p^T A p = {pAp!r} at iteration {state.k}", state)
    rz = state.rz
    gamma = rz / pAp
    rnorm2 = float(np.dot(r, r))
    pnorm2 = float(np.dot(p, p))

    x_new = state.x + gamma * p
    r_new = r - gamma * Ap
    z_new = apply(P, r_new)
    rz_new = float(np.dot(z_new, r_new))
    if rz_new < 0 or (rz_new == 0 and np.any(r_new)):
        state.x, state.r = x_new, r_new
        raise BreakdownError(f"z^T r = {rz_new!r} at iteration {state.k + 1}", state)
    beta = rz_new / rz
    p_new = z_new + beta * p

    event = IterationEvent(state.k, gamma, rz, rnorm2, pnorm2, beta)
    state.x, state.r, state.z, state.p = x_new, r_new, z_new, p_new
    state.gamma, state.beta, state.pAp, state.rz = gamma, beta, pAp, rz_new
    state.k += 1
    return event


def _exhausted(state: SolverState, floor: float = EPS) -> bool:
    rr = state.rnorm2
    return rr == 0.0 or rr < floor * floor * state.bnorm2


def iterate(
    A: CsrMatrix,
    b,
    x0=None,
    P: Optional[Preconditioner] = None,
    max_iter: Optional[int] = None,
    residual_floor: float = EPS,
):
    """Generator over ``(event, state)`` pairs.

    Stops after ``max_iter`` iterations or once the recursive residual drops
    below ``residual_floor * ||b||``.  The state is shared and mutated
    between yields.
    """
    state = init(A, b, x0, P)
    if state.converged:
        return
    if max_iter is None:
        max_iter = 10 * A.n
    while state.k < max_iter:
        event = cg_iter(state, A, P)
        yield event, state
        if _exhausted(state, residual_floor):
            state.converged = True
            return


def run(
    A: CsrMatrix,
    b,
    x0=None,
    P: Optional[Preconditioner] = None,
    max_iter: Optional[int] = None,
    callback: Optional[Callable[[IterationEvent, SolverState], bool]] = None,
    residual_floor: float = EPS,
) -> SolveResult:
    """Run (P)CG, forwarding every event to ``callback``.

    A truthy return from ``callback`` stops the run; the latest iterate is
    returned (for the event of iteration ``k`` this is ``x_{k+1}``).  The run
    also ends when ``||r_k|| < residual_floor * ||b||``; the default machine
    epsilon keeps ``beta`` away from 0/0, a smaller floor lets experiments
    continue into the stagnation of the true error.
    :class:`BreakdownError` propagates.
    """
    state = init(A, b, x0, P)
    if state.converged:
        return SolveResult(state.x, 0, "converged", state)
    if max_iter is None:
        max_iter = 10 * A.n
    while state.k < max_iter:
        event = cg_iter(state, A, P)
        if callback is not None and callback(event, state):
            return SolveResult(state.x, state.k, "callback", state)
        if _exhausted(state, residual_floor):
            state.converged = True
            return SolveResult(state.x, state.k, "residual", state)
    return SolveResult(state.x, state.k, "max_iter", state)
