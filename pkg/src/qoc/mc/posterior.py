"""Conjugate posteriors and test statistics used by the Monte Carlo designs."""

import numpy as np

from qoc.special import beta_sf


def beta_posterior_tail(successes, total, prior=(1.0, 1.0), threshold=0.4):
    """P(theta > threshold) under the Beta(a + y, b + n - y) posterior."""
    a, b = prior
    y = np.asarray(successes, dtype=float)
    n = np.asarray(total, dtype=float)
    if np.isscalar(threshold) and threshold <= 0.0:
        return np.ones(np.broadcast(y, n).shape)[()]
    return beta_sf(threshold, a + y, b + n - y)


def dataset_beta_tail(dataset, arm, prior=(1.0, 1.0), threshold=0.4):
    succ, tot = dataset.arm_summary(arm + 1)
    return float(beta_posterior_tail(succ[arm], tot[arm], prior, threshold))


def posterior_superiority_mc(successes, totals, M, rng, priors=((1.0, 1.0), (1.0, 1.0))):
    """Fraction of M conjugate posterior draws with theta_1 - theta_0 >= 0."""
    (a0, b0), (a1, b1) = priors
    t0 = rng.beta(a0 + successes[0], b0 + totals[0] - successes[0], size=M)
    t1 = rng.beta(a1 + successes[1], b1 + totals[1] - successes[1], size=M)
    return float(np.mean(t1 - t0 >= 0.0))


def z_statistic(g1, g0, n1, n0):
    """Pooled-variance two-proportion z statistic (vectorized).

    A pooled rate of exactly 0 or 1 gives 0.
    """
    g1, g0, n1, n0 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (g1, g0, n1, n0)))
    pooled = (n1 * g1 + n0 * g0) / (n1 + n0)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n0)
    ok = var > 0.0
    z = np.where(ok, (g1 - g0) / np.sqrt(np.where(ok, var, 1.0)), 0.0)
    return z[()] if z.ndim == 0 else z


def dataset_z_statistic(dataset):
    succ, tot = dataset.arm_summary(2)
    if np.any(tot == 0):
        raise ValueError("both arms need at least one patient")
    return float(z_statistic(succ[1] / tot[1], succ[0] / tot[0], tot[1], tot[0]))
