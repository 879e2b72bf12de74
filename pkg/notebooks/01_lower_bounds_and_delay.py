# %% [markdown]
# # Lower bounds on the A-norm of the error
#
# Every CG step produces a term gamma_k * ||r_k||^2.  Summing the terms from
# iteration k to k+d gives a lower bound on eps_k = ||x - x_k||_A^2, and the
# bound gets better as d grows.  This script shows that on a small problem
# with a geometric spectrum, then lets the adaptive controller choose d.

# %%
import numpy as np

from cgest import oracle, problems
from cgest.estimator import adaptive_pcg

A = problems.spectrum_matrix(problems.geometric_spectrum(1.0, 1e3, 200), "givens", seed=3)
b = np.random.default_rng(1).uniform(-1, 1, A.n)
b /= np.linalg.norm(b)
x = oracle.direct_solve(A, b)
ext = oracle.eig_extremes(A)
print(f"n = {A.n}, kappa = {ext.lambda_max / ext.lambda_min:.3g}")

# %% [markdown]
# Run once, recording the true errors alongside the terms.

# %%
tracker = oracle.ErrorTracker(A, x)
terms = []


def record(ev, state, batch):
    if ev is not None:
        tracker(ev, state)
        terms.append(ev.term)


res = adaptive_pcg(A, b, tau=0.25, on_event=record, residual_floor=1e-30, max_iter=2000)
trace = oracle.truth_trace(tracker.eps, ext)
eps, terms = trace.eps, np.array(terms)
print(f"{len(terms)} iterations, ultimate level reached around k = {trace.ultimate_index}")

# %% [markdown]
# Fixed delays: the relative error of the bound at a few iterations.

# %%
print("   k   d=0      d=4      d=16")
for k in (0, 20, 60, 120):
    row = [(eps[k] - terms[k:k + d + 1].sum()) / eps[k] for d in (0, 4, 16)]
    print(f"{k:4d}  " + "  ".join(f"{v:.2e}" for v in row))

# %% [markdown]
# Adaptive delays.  For each accepted estimate compare d_k to the ideal
# delay, the smallest d for which eps_{k+d+1} / eps_k <= tau.

# %%
q = oracle.bound_quality(trace, res.accepted, 0.25)
print(f"{q.k.size} estimates before the ultimate level")
print(f"fraction with relative error <= tau: {q.summary['fraction_within_tau']:.3f}")
print(f"median relative error: {q.summary['median_rel_lower']:.3f}")
print("   k   d_k  ideal  rel.err")
for i in range(0, q.k.size, max(1, q.k.size // 12)):
    print(f"{q.k[i]:4d}  {q.d[i]:4d}  {str(q.ideal_d[i]):>5}  {q.rel_lower[i]:.3f}")
