"""Conjugate gradients with adaptive estimation of the A-norm of the error."""

from .sparse import CsrMatrix, matvec, read_matrix_market, write_matrix_market, read_rhs
from .precond import Preconditioner, build_jacobi, build_ic0, identity
from .solver import IterationEvent, SolverState, BreakdownError, run
from .estimator import (
    AcceptedEstimate,
    ErrorEstimator,
    StoppingPolicy,
    adaptive_pcg,
)

__all__ = [
    "CsrMatrix",
    "matvec",
    "read_matrix_market",
    "write_matrix_market",
    "read_rhs",
    "Preconditioner",
    "build_jacobi",
    "build_ic0",
    "identity",
    "IterationEvent",
    "SolverState",
    "BreakdownError",
    "run",
    "AcceptedEstimate",
    "ErrorEstimator",
    "StoppingPolicy",
    "adaptive_pcg",
]

__version__ = "0.1.0"
