"""Exact operating characteristics of the conjugate binary designs.

These enumerate all outcome counts, so they are the oracles for both the
Monte Carlo and the Q-approximation runners.
"""

import numpy as np
from scipy.special import betaln
from scipy.stats import binom

from qoc.special import beta_sf


def exact_single_arm_power(n, rate, reference=0.4, threshold=0.9, prior=(1.0, 1.0)):
    y = np.arange(n + 1)
    tail = beta_sf(reference, prior[0] + y, prior[1] + n - y)
    return float(binom.pmf(y, n, rate) @ (tail >= threshold))


def prob_beta_greater(a1, b1, a0, b0):
    """P(X > Y) for X ~ Beta(a1, b1), Y ~ Beta(a0, b0) with integer ``a1``.

    Closed-form finite sum; vectorized over ``a0``/``b0``/``b1``.
    """
    a1 = int(a1)
    i = np.arange(a1)[:, None]
    a0, b0, b1 = (np.atleast_1d(np.asarray(v, dtype=float))[None, :] for v in (a0, b0, b1))
    terms = np.exp(betaln(a0 + i, b0 + b1) - np.log(b1 + i) - betaln(1 + i, b1) - betaln(a0, b0))
    return terms.sum(0)


def exact_two_arm_power(n0, n1, rates, threshold=0.9, priors=((1.0, 1.0), (1.0, 1.0))):
    """Exact P(P(theta_1 > theta_0 | data) >= threshold) with integer Beta priors.

    The posterior probability is increasing in y1 for fixed y0, so each row of
    the outcome grid only needs the smallest qualifying y1 (bisection).
    """
    (a0, b0), (a1, b1) = priors
    if any(float(v) != int(v) for v in (a0, b0, a1, b1)):
        raise ValueError("exact enumeration needs integer Beta parameters")

    def prob(y0, y1):
        return prob_beta_greater(a1 + y1, b1 + n1 - y1, a0 + y0, b0 + n0 - y0)[0]

    p0 = binom.pmf(np.arange(n0 + 1), n0, rates[0])
    sf1 = binom.sf(np.arange(-1, n1 + 1), n1, rates[1])  # sf1[j] = P(Y1 >= j)
    total = 0.0
    lo_start = 0
    for y0 in range(n0 + 1):
        # smallest y1 with prob >= threshold is nondecreasing in y0
        lo, hi = lo_start, n1 + 1
        while lo < hi:
            mid = (lo + hi) // 2
            if prob(y0, mid) >= threshold:
                hi = mid
            else:
                lo = mid + 1
        lo_start = lo
        if lo <= n1:
            total += p0[y0] * sf1[lo]
    return float(total)
