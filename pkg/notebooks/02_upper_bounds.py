# %% [markdown]
# # Upper bounds
#
# Two upper estimates sit next to the lower bound.  The heuristic one divides
# the accepted sum by 1 - tau.  The Gauss-Radau one needs a number mu below
# the smallest eigenvalue and is then a guaranteed bound.  The estimator also
# tracks the smallest Ritz value, which approaches lambda_min from above.

# %%
import numpy as np

from cgest import oracle, problems
from cgest.estimator import adaptive_pcg

A = problems.spectrum_matrix(problems.clustered_spectrum(150, [1, 10, 100]), "givens", seed=6)
b = np.random.default_rng(1).uniform(-1, 1, A.n)
b /= np.linalg.norm(b)
x = oracle.direct_solve(A, b)
ext = oracle.eig_extremes(A)
tracker = oracle.ErrorTracker(A, x)
res = adaptive_pcg(A, b, mu=ext.mu, on_event=lambda ev, s, batch: ev is not None and tracker(ev, s),
                   residual_floor=1e-30, max_iter=1500)
trace = oracle.truth_trace(tracker.eps, ext)
q = oracle.bound_quality(trace, res.accepted, 0.25)

# %%
print("   k     eps_k      lower/eps  heur/eps  Omega/eps")
for i in range(0, q.k.size, max(1, q.k.size // 10)):
    k, e = q.k[i], q.eps[i]
    print(f"{k:4d}  {e:.3e}  {1 - q.rel_lower[i]:9.4f}  {1 + q.rel_upper[i]:8.4f}  {1 + q.rel_omega[i]:9.4f}")
print(f"smallest Omega/eps: {1 + np.nanmin(q.rel_omega):.6f}")

# %% [markdown]
# The Ritz estimate mu_k against lambda_min.

# %%
mu = np.array(res.estimator.mu_history)
for k in (0, 5, 10, 20, 40, trace.ultimate_index - 1):
    print(f"k = {k:3d}: mu_k / lambda_min = {mu[k] / ext.lambda_min:.6f}")
