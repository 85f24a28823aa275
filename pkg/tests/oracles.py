"""Reference values computed independently of the package (scipy only)."""

import numpy as np
from scipy import integrate, stats


def single_arm_power(n, rate, reference=0.4, threshold=0.9):
    y = np.arange(n + 1)
    return float(stats.binom.pmf(y, n, rate) @ (stats.beta.sf(reference, 1 + y, 1 + n - y) >= threshold))


def superiority_grid(n0, n1, nodes=400):
    """P(theta_1 > theta_0 | y0, y1) under uniform priors, shape (n0+1, n1+1)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    th, w = (x + 1) / 2, w / 2
    y0 = np.arange(n0 + 1)[:, None]
    y1 = np.arange(n1 + 1)[:, None]
    pdf0 = stats.beta.pdf(th[None, :], 1 + y0, 1 + n0 - y0)
    sf1 = stats.beta.sf(th[None, :], 1 + y1, 1 + n1 - y1)
    return (pdf0 * w) @ sf1.T


def two_arm_power(n0, n1, rates, threshold=0.9):
    pm = np.outer(stats.binom.pmf(np.arange(n0 + 1), n0, rates[0]), stats.binom.pmf(np.arange(n1 + 1), n1, rates[1]))
    return float((pm * (superiority_grid(n0, n1) >= threshold)).sum())


def beta_superiority_quad(a1, b1, a0, b0):
    f = lambda t: stats.beta.pdf(t, a0, b0) * stats.beta.sf(t, a1, b1)
    return integrate.quad(f, 0, 1, epsabs=1e-12, limit=200)[0]


def bvn_cdf(h, k, r):
    return float(stats.multivariate_normal(mean=[0, 0], cov=[[1, r], [r, 1]]).cdf([h, k]))


def mvn_orthant(mean, cov):
    """P(X >= 0) for X ~ N(mean, cov) by scipy's Genz integration."""
    mean = np.asarray(mean, float)
    return float(stats.multivariate_normal.cdf(np.zeros(mean.size), mean=-mean, cov=cov, allow_singular=True,
                                               abseps=1e-7, releps=1e-7, maxpts=2_000_000))


def argmax_probs_mc(mean, cov, draws=400_000, seed=0):
    z = np.random.default_rng(seed).multivariate_normal(mean, cov, size=draws)
    return np.bincount(z.argmax(1), minlength=len(mean)) / draws
