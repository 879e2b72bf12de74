# %% [markdown]
# # Long stagnation and the initial phase
#
# When CG stagnates for many steps the terms barely change, and a short
# window cannot tell stagnation from convergence.  The plain controller may
# then accept an estimate far below the true error.  The initial phase keeps
# growing d until a Ritz-based proxy phi_d is small against the accumulated
# sum.  Below, a problem built to stagnate for 60 steps before converging fast.

# %%
import numpy as np

from cgest import oracle, problems
from cgest.estimator import adaptive_pcg

A, b, eps_exact = problems.stagnation_problem()
x = oracle.direct_solve(A, b)
ext = oracle.eig_extremes(A)
print(f"n = {A.n}, kappa = {ext.lambda_max / ext.lambda_min:.3g}")
print("exact-arithmetic errors:", ", ".join(f"{eps_exact[k]:.3g}" for k in (0, 20, 40, 59, 62, 70)))

# %%
for initial in (False, True):
    tracker = oracle.ErrorTracker(A, x)
    res = adaptive_pcg(A, b, initial_phase=initial,
                       on_event=lambda ev, s, batch: ev is not None and tracker(ev, s))
    first = res.accepted[0]
    e0 = tracker.eps[0]
    label = "with initial phase" if initial else "plain controller  "
    print(f"{label}: estimate for k=0 uses d={first.d_used}, relative error {(e0 - first.delta) / e0:.3f}")
