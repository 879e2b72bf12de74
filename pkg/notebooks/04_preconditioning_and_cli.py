# %% [markdown]
# # Preconditioning and the command line
#
# With M = L L^T the estimator works with z_k^T r_k in place of ||r_k||^2
# and bounds the same A-norm of the error.  The command line drives the same
# code and writes one CSV row per accepted estimate.

# %%
import os
import subprocess
import sys
import tempfile

import numpy as np

from cgest import oracle, problems
from cgest.estimator import adaptive_pcg
from cgest.precond import build_ic0, build_jacobi
from cgest.sparse import write_matrix_market

A = problems.laplacian_2d(20)
b = np.random.default_rng(1).uniform(-1, 1, A.n)
b /= np.linalg.norm(b)
x = oracle.direct_solve(A, b)

# the diagonal is constant, so Jacobi only rescales and changes nothing
for name, P in (("none", None), ("jacobi", build_jacobi(A)), ("ic0", build_ic0(A))):
    ext = oracle.eig_extremes(A, P)
    tracker = oracle.ErrorTracker(A, x)
    res = adaptive_pcg(A, b, P=P, mu=ext.mu, on_event=lambda ev, s, batch: ev is not None and tracker(ev, s))
    q = oracle.bound_quality(oracle.truth_trace(tracker.eps, ext), res.accepted, 0.25)
    print(f"{name:6s}: {res.result.iterations:3d} iterations, kappa {ext.lambda_max / ext.lambda_min:8.2f}, "
          f"within tau {q.summary['fraction_within_tau']:.3f}")

# %% [markdown]
# Generate a matrix and compare against the truth from the shell.

# %%
tmp = tempfile.mkdtemp()
mtx = os.path.join(tmp, "staircase.mtx")
cmd = [sys.executable, "-m", "cgest.cli"]
subprocess.run(cmd + ["gen", "--spectrum", "staircase", "-n", "120", "--levels", "1,100,10000",
                      "--output", mtx], check=True)
out = subprocess.run(cmd + ["compare", "--matrix", mtx, "--rhs", "uniform-random", "--seed", "1",
                            "--mu", "oracle", "--residual-floor", "1e-30"], capture_output=True, text=True)
print(out.stderr)
print("\n".join(out.stdout.splitlines()[:6]))
