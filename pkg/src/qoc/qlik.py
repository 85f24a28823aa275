"""Gaussian surrogate likelihoods and their conjugate posteriors.

A Q-likelihood is ``exp(-(theta - C)^T V (theta - C) / 2)``.  Products of
Q-likelihoods and Gaussian priors stay in the family, which is all the
multi-stage designs need.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from qoc._linalg import chol_psd, inv_spd, symmetrize
from qoc.mvn import normal_cdf


def _as_curvature(v, d):
    v = symmetrize(np.atleast_2d(np.asarray(v, dtype=float)))
    if v.shape != (d, d):
        raise ValueError("curvature shape does not match center")
    return v


@dataclass(frozen=True)
class QLikelihood:
    center: np.ndarray
    curvature: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "curvature", _as_curvature(self.curvature, c.size))

    @property
    def dim(self):
        return self.center.size

    def log_density(self, theta):
        r = np.asarray(theta, dtype=float) - self.center
        return -0.5 * np.einsum("...i,ij,...j->...", r, self.curvature, r)


@dataclass(frozen=True)
class GaussianPrior:
    """``N(mean, cov)``, or the improper flat prior when ``flat`` is set."""

    mean: np.ndarray | None = None
    cov: np.ndarray | None = None
    flat: bool = False

    def __post_init__(self):
        if self.flat:
            return
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = _as_curvature(self.cov, m.size)
        if np.any(np.linalg.eigvalsh(c) <= 0):
            raise ValueError("prior covariance must be positive definite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    @cached_property
    def precision(self):
        return inv_spd(self.cov)

    @classmethod
    def isotropic(cls, d, variance):
        return cls(np.zeros(d), variance * np.eye(d))


def beta_to_gaussian_prior(alphas, betas):
    """Moment-matched Gaussian stand-in for independent Beta priors on arm rates.

    All-uniform Beta(1, 1) priors map to the flat prior.
    """
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)
    if np.all(a == 1.0) and np.all(b == 1.0):
        return GaussianPrior(flat=True)
    s = a + b
    return GaussianPrior(a / s, np.diag(a * b / (s**2 * (s + 1.0))))


@dataclass(frozen=True)
class QPosterior:
    center: np.ndarray
    curvature: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "curvature", _as_curvature(self.curvature, c.size))

    @cached_property
    def covariance(self):
        return inv_spd(self.curvature)

    @property
    def dim(self):
        return self.center.size


@dataclass(frozen=True)
class CenterLaw:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", _as_curvature(self.cov, m.size))

    @cached_property
    def factor(self):
        return chol_psd(self.cov)

    @classmethod
    def from_asymptotics(cls, theta_star, V_star, n):
        return cls(theta_star, np.asarray(V_star, dtype=float) / n)


def sample_center(law, rng, size=None):
    """One draw (or ``size`` draws) of ``C ~ N(theta*, V*/n)``."""
    if size is None:
        return law.mean + law.factor @ rng.standard_normal(law.mean.size)
    return law.mean + rng.standard_normal((size, law.mean.size)) @ law.factor.T


def combine(stage_liks):
    """Precision-weighted product of stage Q-likelihoods."""
    stage_liks = list(stage_liks)
    if not stage_liks:
        raise ValueError("nothing to combine")
    if len(stage_liks) == 1:
        return stage_liks[0]
    d = stage_liks[0].dim
    if any(l.dim != d for l in stage_liks):
        raise ValueError("stage dimensions differ")
    v = sum(l.curvature for l in stage_liks)
    h = sum(l.curvature @ l.center for l in stage_liks)
    try:
        c = np.linalg.solve(v, h)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("combined curvature is singular") from exc
    return QLikelihood(c, v)


def posterior_update(lik, prior):
    if prior.flat:
        # a flat prior leaves the curvature alone, so it must be strictly positive definite
        np.linalg.cholesky(symmetrize(lik.curvature))
        return QPosterior(lik.center, lik.curvature)
    vp = lik.curvature + prior.precision
    cp = np.linalg.solve(vp, lik.curvature @ lik.center + prior.precision @ prior.mean)
    return QPosterior(cp, vp)


def linear_functional(post, a, b=0.0):
    a = np.asarray(a, dtype=float)
    if a.shape != post.center.shape:
        raise ValueError("functional dimension does not match posterior")
    return float(a @ post.center + b), float(a @ post.covariance @ a)


def tail_probability(post, a, b, threshold):
    """P(a^T theta + b > threshold) under the Gaussian posterior."""
    mean, var = linear_functional(post, a, b)
    if var <= 0.0:
        return float(mean > threshold)
    return float(normal_cdf((mean - threshold) / np.sqrt(var)))


def posterior_update_batch(centers, curvature, prior):
    """Posterior centers for a stack of Q-likelihoods sharing one curvature.

    ``centers`` has shape (B, d).  Returns ``(posterior_centers, posterior_curvature)``.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    v = symmetrize(curvature)
    if prior.flat:
        return centers, v
    vp = v + prior.precision
    rhs = centers @ v.T + prior.precision @ prior.mean
    return np.linalg.solve(vp, rhs.T).T, vp
