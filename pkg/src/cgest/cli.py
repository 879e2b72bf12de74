"""Command line front end: ``cgest solve``, ``cgest compare`` and ``cgest gen``.

Exit codes: 0 when the run ended by the estimate-based stop or because the
residual was exhausted, 2 when ``--max-iter`` ran out, 3 on a breakdown
(CG or IC(0)), 1 on input and validation errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import oracle, problems
from .estimator import StoppingPolicy, adaptive_pcg
from .precond import IC0Breakdown, build
from .solver import EPS, BreakdownError
from .sparse import MatrixMarketError, read_matrix_market, read_rhs, write_matrix_market

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER, EXIT_BREAKDOWN = 0, 1, 2, 3

SOLVE_COLUMNS = ["k", "accepted_d", "delta", "delta_plus", "upper_heuristic", "omega", "mu_k", "phi_k", "stopped"]
COMPARE_COLUMNS = SOLVE_COLUMNS + [
    "eps_true", "rel_err_lower", "ideal_d", "tau", "rel_err_upper", "rel_err_omega", "before_ultimate",
]


@dataclass
class RunConfig:
    matrix_path: str
    rhs: str = "equal"
    seed: int = 0
    precond: str = "none"
    shift: float = 0.0
    tau: float = 0.25
    window_tol: float = 1e-4
    d_min: int = 0
    initial_phase: bool = False
    mu: Optional[str] = None
    stop: str = "none"
    threshold: float = 1e-8
    max_iter: Optional[int] = None
    residual_floor: float = EPS

    def validate(self) -> None:
        if not 0 < self.tau < 1:
            raise ValueError("--tau must lie in (0, 1)")
        if not self.threshold > 0:
            raise ValueError("--threshold must be positive")
        if not self.window_tol > 0:
            raise ValueError("--window-tol must be positive")
        if self.d_min < 0:
            raise ValueError("--d-min must be nonnegative")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("--max-iter must be positive")
        if not self.residual_floor >= 0:
            raise ValueError("--residual-floor must be nonnegative")


class UsageError(ValueError):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".17g")


def _json_value(v):
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return None if math.isnan(v) else float(format(v, ".17g"))


def write_records(rows: List[dict], columns: List[str], fmt: str, out) -> None:
    if fmt == "csv":
        out.write(",".join(columns) + "\n")
        for row in rows:
            out.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")
    else:
        for row in rows:
            out.write(json.dumps({c: _json_value(row.get(c)) for c in columns}) + "\n")


def _open_output(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def _load(cfg: RunConfig):
    A = read_matrix_market(cfg.matrix_path)
    b = read_rhs(cfg.rhs, A.n, cfg.seed)
    P = build(A, cfg.precond, cfg.shift)
    return A, b, P


def _resolve_mu(cfg: RunConfig, A, P) -> Optional[float]:
    if cfg.mu is None:
        return None
    if cfg.mu == "oracle":
        return oracle.eig_extremes(A, P).mu
    mu = float(cfg.mu)
    if not mu > 0:
        raise UsageError("--mu must be positive")
    return mu


def _policy(cfg: RunConfig) -> Optional[StoppingPolicy]:
    if cfg.stop == "none":
        return None
    return StoppingPolicy(cfg.stop, cfg.threshold)


def _execute(cfg: RunConfig, A, b, P, mu, tracker=None):
    """Run the estimator and turn accepted estimates into rows.

    Returns ``(rows, solve, error, estimator)``.  ``error`` is a breakdown
    raised mid-run, in which case the estimates accepted before it are kept.
    """
    def on_event(ev, state, batch):
        if ev is not None and tracker is not None:
            tracker(ev, state)

    solve, err = None, None
    try:
        solve = adaptive_pcg(
            A, b, P=P, tau=cfg.tau, window_tol=cfg.window_tol, d_min=cfg.d_min,
            initial_phase=cfg.initial_phase, mu=mu, stop=_policy(cfg), max_iter=cfg.max_iter,
            on_event=on_event, residual_floor=cfg.residual_floor,
        )
        est = solve.estimator
    except BreakdownError as exc:
        err = exc
        est = getattr(exc, "estimator", None)
    rows = []
    if est is not None:
        for a in est.accepted:
            rows.append({
                "k": a.k, "accepted_d": a.d_used, "delta": a.delta, "delta_plus": a.delta_plus,
                "upper_heuristic": a.upper_heuristic, "omega": a.omega,
                "mu_k": est.mu_history[a.k], "phi_k": est.phi_history[a.k], "stopped": False,
            })
    if solve is not None and solve.stopped_by_estimate and rows:
        rows[-1]["stopped"] = True
    return rows, solve, err, est


def _summary(solve, err, rows) -> int:
    if err is not None:
        print(f"breakdown: {err}", file=sys.stderr)
        code = EXIT_BREAKDOWN
    else:
        res = solve.result
        if solve.stopped_by_estimate:
            print(f"stopped by estimate after {res.iterations} iterations", file=sys.stderr)
            code = EXIT_OK
        elif res.reason == "max_iter":
            print(f"iteration budget exhausted after {res.iterations} iterations", file=sys.stderr)
            code = EXIT_MAX_ITER
        else:
            print(f"residual exhausted after {res.iterations} iterations", file=sys.stderr)
            code = EXIT_OK
    if rows:
        last = rows[-1]
        lo = math.sqrt(last["delta_plus"])
        hi = math.sqrt(last["upper_heuristic"])
        print(
            f"last estimate k={last['k']} d={last['accepted_d']}: "
            f"||x-x_k||_A >= {lo:.6e}, heuristic upper {hi:.6e}",
            file=sys.stderr,
        )
    else:
        print("no estimate accepted", file=sys.stderr)
    return code


def cmd_solve(cfg: RunConfig, fmt: str = "csv", output=None) -> int:
    cfg.validate()
    A, b, P = _load(cfg)
    mu = _resolve_mu(cfg, A, P)
    rows, solve, err, _ = _execute(cfg, A, b, P, mu)
    out, close = _open_output(output)
    try:
        write_records(rows, SOLVE_COLUMNS, fmt, out)
    finally:
        if close:
            out.close()
    return _summary(solve, err, rows)


def cmd_compare(cfg: RunConfig, fmt: str = "csv", output=None) -> int:
    """Solve once with truth tracking and emit per-estimate quality columns."""
    cfg.validate()
    A, b, P = _load(cfg)
    x_true = oracle.direct_solve(A, b)
    ext = oracle.eig_extremes(A, P)
    mu = _resolve_mu(cfg, A, P)
    tracker = oracle.ErrorTracker(A, x_true)
    rows, solve, err, _ = _execute(cfg, A, b, P, mu, tracker)
    trace = oracle.truth_trace(tracker.eps, ext)
    eps = trace.eps
    for row in rows:
        k = row["k"]
        if k >= len(eps):
            continue
        e = eps[k]
        row["eps_true"] = e
        row["tau"] = cfg.tau
        if e > 0:
            row["rel_err_lower"] = (e - row["delta"]) / e
            row["rel_err_upper"] = (row["upper_heuristic"] - e) / e
            if row["omega"] is not None:
                row["rel_err_omega"] = (row["omega"] - e) / e
        row["ideal_d"] = oracle.ideal_delay(trace, k, cfg.tau)
        row["before_ultimate"] = k + row["accepted_d"] < trace.ultimate_index
    out, close = _open_output(output)
    try:
        write_records(rows, COMPARE_COLUMNS, fmt, out)
    finally:
        if close:
            out.close()
    kept = [r for r in rows if r.get("before_ultimate") and "rel_err_lower" in r]
    if kept:
        frac = float(np.mean([r["rel_err_lower"] <= cfg.tau for r in kept]))
        print(f"fraction of estimates with relative error <= tau: {frac:.4f} "
              f"({len(kept)} before the ultimate level)", file=sys.stderr)
    return _summary(solve, err, rows)


def _floats(text: str) -> List[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def cmd_gen(args) -> int:
    kind = args.spectrum
    if args.n < 1:
        raise UsageError("-n must be at least 1")
    if kind == "geometric":
        eigs = problems.geometric_spectrum(args.lmin, args.lmax, args.n)
    elif kind == "clustered":
        eigs = problems.clustered_spectrum(args.n, _floats(args.centers), args.width, args.seed)
    elif kind == "staircase":
        eigs = problems.staircase_spectrum(args.n, _floats(args.levels), args.width)
    else:
        eigs = problems.strakos_spectrum(args.n, args.lmin, args.lmax, args.rho)
    A = problems.spectrum_matrix(eigs, args.similarity, args.seed)
    comment = f"{kind} spectrum, n={args.n}, similarity={args.similarity}, seed={args.seed}"
    if args.output in (None, "-"):
        write_matrix_market(A, sys.stdout, comment)
    else:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            write_matrix_market(A, fh, comment)
    print(f"wrote {kind} matrix of order {A.n} with {A.nnz} entries", file=sys.stderr)
    return EXIT_OK


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--matrix", required=True, help="Matrix Market file (coordinate, real, symmetric or general)")
    p.add_argument("--rhs", default="equal", help="'equal', 'uniform-random' or a path to a vector file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precond", choices=["none", "jacobi", "ic0"], default="none")
    p.add_argument("--shift", type=float, default=0.0, help="diagonal shift used when building IC(0)")
    p.add_argument("--tau", type=float, default=0.25)
    p.add_argument("--window-tol", type=float, default=1e-4)
    p.add_argument("--d-min", type=int, default=0)
    p.add_argument("--initial-phase", action="store_true")
    p.add_argument("--mu", default=None, help="Gauss-Radau node; a number, or 'oracle' for lambda_min/(1+1e-4)")
    p.add_argument("--stop", choices=["none", "absolute", "relative"], default="none")
    p.add_argument("--threshold", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--residual-floor", type=float, default=EPS,
                   help="stop once ||r_k|| < floor * ||b|| (default: machine epsilon)")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--output", default=None, help="output file (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgest", description="CG with adaptive error estimation.")
    sub = parser.add_subparsers(dest="command", required=True)
    _run_options(sub.add_parser("solve", help="run PCG with the adaptive estimator"))
    _run_options(sub.add_parser("compare", help="run PCG and compare estimates with the dense truth"))
    g = sub.add_parser("gen", help="write an SPD matrix with a prescribed spectrum")
    g.add_argument("--spectrum", choices=["geometric", "clustered", "staircase", "strakos"], default="geometric")
    g.add_argument("-n", type=int, required=True)
    g.add_argument("--lmin", type=float, default=1.0)
    g.add_argument("--lmax", type=float, default=1e4)
    g.add_argument("--rho", type=float, default=0.9)
    g.add_argument("--centers", default="1,10,100")
    g.add_argument("--levels", default="1,100,10000")
    g.add_argument("--width", type=float, default=0.05, help="cluster width or staircase spread")
    g.add_argument("--similarity", choices=["diagonal", "givens", "dense"], default="diagonal")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", default=None)
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(
        matrix_path=args.matrix, rhs=args.rhs, seed=args.seed, precond=args.precond, shift=args.shift,
        tau=args.tau, window_tol=args.window_tol, d_min=args.d_min, initial_phase=args.initial_phase,
        mu=args.mu, stop=args.stop, threshold=args.threshold, max_iter=args.max_iter,
        residual_floor=args.residual_floor,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args)
        cfg = config_from_args(args)
        run = cmd_solve if args.command == "solve" else cmd_compare
        return run(cfg, args.format, args.output)
    except IC0Breakdown as exc:
        print(f"IC(0) breakdown: {exc}; retry with --shift", file=sys.stderr)
        return EXIT_BREAKDOWN
    except (OSError, ValueError, ArithmeticError, MatrixMarketError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
