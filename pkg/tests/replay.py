"""Straightforward re-implementation of the adaptive controller, used as an oracle.

Written directly from the pseudocode: every window sum is recomputed from the
raw terms with ``math.fsum``, the window start is found by a linear scan and
the safety factor by a direct maximum.  No prefix sums, no bisection, no
shared state with the package.
"""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple


def window_sum(terms, a, b):
    return math.fsum(terms[a:b + 1])


def _sign(x):
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def smallest_ritz_stream(gammas: Sequence[float], betas: Sequence[float]):
    """``(mu_k, pi_k)`` for each k from the incremental recurrences.

    ``betas[k]`` is beta_k (``betas[0]`` unused).
    """
    out = []
    rho = tau = sigma = s = None
    c = 1.0
    pi = 1.0
    for k, g in enumerate(gammas):
        if k == 0:
            rho = g
            tau = rho
            sigma, s, c, pi = 0.0, 0.0, 1.0, 1.0
        else:
            beta = betas[k]
            gp = gammas[k - 1]
            sigma_new = -math.sqrt(g * beta / gp) * (s * sigma + c * tau)
            tau = g * (beta * tau / gp + 1.0)
            sigma = sigma_new
            diff = rho - tau
            chi = math.sqrt(diff * diff + 4.0 * sigma * sigma)
            c2 = 0.5 * (1.0 - diff / chi) if chi > 0 else 0.5
            rho = rho + chi * c2
            s = math.sqrt(1.0 - c2)
            c = math.sqrt(c2) * _sign(sigma)
            pi = pi / (pi + beta)
        out.append((1.0 / rho, pi))
    return out


def replay(
    gammas: Sequence[float],
    rzs: Sequence[float],
    tau: float = 0.25,
    tol: float = 1e-4,
    d_min: int = 0,
    initial: bool = False,
) -> Tuple[List[Tuple[int, int, float]], int]:
    """Accepted ``(k, d, delta)`` triples and the delay that ended the initial phase.

    ``rzs[k]`` is ``z_k^T r_k``; beta_k is formed as ``rzs[k] / rzs[k-1]``.
    """
    n = len(gammas)
    terms = [g * r for g, r in zip(gammas, rzs)]
    betas = [float("nan")] + [rzs[k] / rzs[k - 1] for k in range(1, n)]
    ritz = smallest_ritz_stream(gammas, betas) if initial else None
    accepted = []
    d, k = 0, 0
    d0 = None if initial else 0
    for ell in range(n):
        if initial:
            mu_d, pi_d = ritz[ell]
            phi_d = pi_d / mu_d * rzs[ell]
            if phi_d / window_sum(terms, 0, d) < tau:
                initial = False
                d0 = d
            else:
                d = d + 1
            continue
        if ell > 0:
            delta = window_sum(terms, k, k + d)
            # m: the largest l < k whose window dwarfs the current one
            m = 0
            for l in range(k - 1, -1, -1):
                if window_sum(terms, k, ell) / window_sum(terms, l, ell) <= tol:
                    m = l
                    break
            S = max(window_sum(terms, l, k + d + 1) / terms[l] for l in range(m, k + d + 1))
            while d >= d_min and S * terms[ell] / delta <= tau:
                accepted.append((k, d, delta))
                k = k + 1
                d = d - 1
                if d >= 0:
                    delta = window_sum(terms, k, k + d)
            d = d + 1
    return accepted, d0
