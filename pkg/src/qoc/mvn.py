"""Multivariate-normal numerics: CDFs, sampling and argmax probabilities.

Orthant probabilities are evaluated three ways depending on dimension:

* d = 1, 2: closed form (univariate CDF, Genz's bivariate algorithm);
* d = 3: one-dimensional Gauss-Legendre integration of the bivariate CDF
  conditional on the first (most constraining) coordinate;
* d >= 4, or on request: Genz's separation-of-variables integrand on a
  randomized rank-1 lattice with antithetic tent periodization.

The first two are deterministic and vectorized over stacks of problems, which
is what the adaptive-randomization runner needs per stage.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from qoc._linalg import chol_psd, symmetrize

_SQRT2PI = np.sqrt(2.0 * np.pi)
_GL6 = np.polynomial.legendre.leggauss(6)
_GL12 = np.polynomial.legendre.leggauss(12)
_GL20 = np.polynomial.legendre.leggauss(20)


@dataclass(frozen=True)
class MvnLaw:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = symmetrize(np.atleast_2d(np.asarray(self.cov, dtype=float)))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size


def normal_cdf(x):
    """Standard normal CDF, accurate into the subnormal lower tail."""
    x = np.asarray(x, dtype=float)
    out = np.where(x < -5.0, np.exp(special.log_ndtr(np.minimum(x, -5.0))), special.ndtr(x))
    return out[()] if out.ndim == 0 else out


def sample_mvn(law, rng, size=None):
    l = chol_psd(law.cov)
    if size is None:
        return law.mean + l @ rng.standard_normal(law.dim)
    z = rng.standard_normal((size, law.dim))
    return law.mean + z @ l.T


def _bvnu(h, k, r):
    """P(X > h, Y > k) for a standard bivariate normal with correlation r.

    Vectorized transcription of Genz's BVNU (Drezner-Wesolowsky with the
    large-|r| expansion) with Gauss-Legendre rules of 6, 12 or 20 points.
    """
    h, k, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (h, k, r)))
    h, k, r = h.copy(), k.copy(), r.copy()
    out = np.empty(h.shape)

    small = np.abs(r) < 0.925
    # Genz's rule sizes: 6, 12 or 20 points depending on |r|
    for lo, hi, (x, w) in ((0.0, 0.3, _GL6), (0.3, 0.75, _GL12), (0.75, 0.925, _GL20)):
        sel = small & (np.abs(r) >= lo) & (np.abs(r) < hi)
        if not sel.any():
            continue
        hs_, ks_, rs_ = h[sel], k[sel], r[sel]
        hk = hs_ * ks_
        hs = 0.5 * (hs_**2 + ks_**2)
        asr = np.arcsin(rs_)
        sn = np.sin(asr[..., None] * (x + 1.0) / 2.0)
        terms = np.exp((sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn))
        bvn = (terms * w).sum(-1) * asr / (4.0 * np.pi)
        out[sel] = bvn + special.ndtr(-hs_) * special.ndtr(-ks_)

    big = ~small
    if big.any():
        x, w = _GL20
        hb, kb, rb = h[big], k[big], r[big]
        kb = np.where(rb < 0, -kb, kb)
        hk = hb * kb
        bvn = np.zeros(hb.shape)
        inner = np.abs(rb) < 1.0
        if inner.any():
            hi, ki, ri, hki = hb[inner], kb[inner], rb[inner], hk[inner]
            as_ = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(as_)
            bs = (hi - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 16.0
            val = a * np.exp(-(bs / as_ + hki) / 2.0) * (
                1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
            )
            b = np.sqrt(bs)
            tail = (
                np.exp(-hki / 2.0) * _SQRT2PI * special.ndtr(-b / a) * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
            )
            val = val - np.where(hki > -160.0, tail, 0.0)
            a2 = a / 2.0
            xs = (a2[..., None] * (x + 1.0)) ** 2
            rs = np.sqrt(1.0 - xs)
            ex = np.exp(-(bs[..., None] / xs + hki[..., None]) / 2.0)
            part = ex * (
                np.exp(-hki[..., None] * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                - (1.0 + c[..., None] * xs * (1.0 + d[..., None] * xs))
            )
            val = val + a2 * (part * w).sum(-1) / 2.0 * 2.0
            bvn[inner] = -val / (2.0 * np.pi)
        pos = rb > 0
        bvn = np.where(pos, bvn + special.ndtr(-np.maximum(hb, kb)), bvn)
        bvn = np.where(rb < 0, -bvn + np.maximum(0.0, special.ndtr(-hb) - special.ndtr(-kb)), bvn)
        out[big] = bvn
    return np.clip(out, 0.0, 1.0)


def _bvnu_rows(h, k, r):
    """``_bvnu`` for ``h, k`` of shape (P, N) sharing one correlation per row.

    The rule-dependent factors of the small-|r| branch only depend on ``r``,
    so they are formed once per row instead of once per element.
    """
    out = np.empty(h.shape)
    small = np.abs(r) < 0.925
    for lo, hi, (x, w) in ((0.0, 0.3, _GL6), (0.3, 0.75, _GL12), (0.75, 0.925, _GL20)):
        sel = small & (np.abs(r) >= lo) & (np.abs(r) < hi)
        if not sel.any():
            continue
        hs_, ks_ = h[sel], k[sel]
        asr = np.arcsin(r[sel])
        sn = np.sin(asr[:, None] * (x + 1.0) / 2.0)
        c = 1.0 / (1.0 - sn * sn)
        a = sn * c
        hk = hs_ * ks_
        hs = 0.5 * (hs_**2 + ks_**2)
        terms = np.exp(hk[..., None] * a[:, None, :] - hs[..., None] * c[:, None, :])
        bvn = (terms @ w) * (asr / (4.0 * np.pi))[:, None]
        out[sel] = bvn + special.ndtr(-hs_) * special.ndtr(-ks_)
    if not small.all():
        big = ~small
        out[big] = _bvnu(h[big], k[big], np.broadcast_to(r[big, None], h[big].shape))
    return np.clip(out, 0.0, 1.0)


def bvn_cdf(h, k, r):
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation r."""
    return _bvnu(-np.asarray(h, dtype=float), -np.asarray(k, dtype=float), r)


def _standardize(mean, cov):
    sd = np.sqrt(np.diagonal(cov, axis1=-2, axis2=-1))
    b = mean / sd
    corr = cov / (sd[..., :, None] * sd[..., None, :])
    return b, corr


def _orthant_1d(b):
    return normal_cdf(b[..., 0])


def _orthant_2d(b, corr):
    return bvn_cdf(b[..., 0], b[..., 1], np.clip(corr[..., 0, 1], -1.0, 1.0))


def _orthant_3d(b, corr, nodes=20):
    # condition on the coordinate with the smallest marginal probability
    order = np.argsort(b, axis=-1)
    b = np.take_along_axis(b, order, -1)
    corr = np.take_along_axis(np.take_along_axis(corr, order[..., :, None], -2), order[..., None, :], -1)
    r12, r13, r23 = corr[..., 0, 1], corr[..., 0, 2], corr[..., 1, 2]
    s2 = np.sqrt(np.clip(1.0 - r12**2, 1e-300, None))
    s3 = np.sqrt(np.clip(1.0 - r13**2, 1e-300, None))
    rho = np.clip((r23 - r12 * r13) / (s2 * s3), -1.0, 1.0)

    x, w = np.polynomial.legendre.leggauss(nodes)
    e1 = normal_cdf(b[..., 0])
    u = e1[..., None] * (x + 1.0) / 2.0
    z1 = special.ndtri(np.clip(u, 1e-300, 1.0))
    h = (b[..., 1, None] - r12[..., None] * z1) / s2[..., None]
    k = (b[..., 2, None] - r13[..., None] * z1) / s3[..., None]
    shape = h.shape
    inner = _bvnu_rows(-h.reshape(-1, nodes), -k.reshape(-1, nodes), rho.reshape(-1)).reshape(shape)
    return e1 * (inner @ w) / 2.0


_PRIMES = np.array([2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
                    73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139])


def _prioritized_cholesky(cov, b):
    """Genz-Bretz variable ordering: most constraining coordinate first."""
    c = cov.copy()
    b = b.copy()
    d = b.size
    l = np.zeros((d, d))
    ybar = np.zeros(d)
    for i in range(d):
        rest = np.arange(i, d)
        var = np.diag(c)[rest] - (l[rest, :i] ** 2).sum(1)
        sd = np.sqrt(np.clip(var, 1e-300, None))
        shift = l[rest, :i] @ ybar[:i]
        j = rest[np.argmin(normal_cdf((b[rest] - shift) / sd))]
        if j != i:
            c[[i, j]] = c[[j, i]]
            c[:, [i, j]] = c[:, [j, i]]
            b[[i, j]] = b[[j, i]]
            l[[i, j]] = l[[j, i]]
        piv = np.sqrt(max(c[i, i] - l[i, :i] @ l[i, :i], 0.0))
        if piv <= 0.0:
            raise ValueError("degenerate coordinate in orthant integrand")
        l[i, i] = piv
        l[i + 1:, i] = (c[i + 1:, i] - l[i + 1:, :i] @ l[i, :i]) / piv
        t = (b[i] - l[i, :i] @ ybar[:i]) / piv
        pt = max(normal_cdf(t), 1e-300)
        ybar[i] = -np.exp(-0.5 * t * t) / _SQRT2PI / pt
    return l, b


def _sov(points, l, b):
    n = points.shape[0]
    d = b.size
    e = np.full(n, normal_cdf(b[0] / l[0, 0]))
    f = e.copy()
    y = np.zeros((n, d))
    for i in range(1, d):
        y[:, i - 1] = special.ndtri(np.clip(points[:, i - 1] * e, 1e-300, 1.0 - 1e-16))
        e = normal_cdf((b[i] - y[:, :i] @ l[i, :i]) / l[i, i])
        f *= e
    return f


def genz_orthant(mean, cov, rng=None, tol=5e-4, shifts=8, points=2000, max_points=1_000_000):
    """P(Y >= 0) for one Y ~ N(mean, cov) by randomized lattice QMC.

    Returns ``(probability, error_estimate)``; the error is three standard
    errors across the random shifts.  The lattice size doubles until the error
    meets ``tol`` or the total point budget is spent.
    """
    mean = np.asarray(mean, dtype=float)
    cov = symmetrize(cov)
    d = mean.size
    if d == 1:
        return float(normal_cdf(mean[0] / np.sqrt(cov[0, 0]))), 0.0
    if d - 1 > _PRIMES.size:
        raise ValueError("dimension too large for the lattice generator")
    rng = np.random.default_rng(0) if rng is None else rng
    l, b = _prioritized_cholesky(cov, mean)
    gen = np.sqrt(_PRIMES[: d - 1].astype(float)) % 1.0
    n = points
    used = 0
    while True:
        idx = np.arange(1, n + 1, dtype=float)[:, None]
        vals = np.empty(shifts)
        for s in range(shifts):
            pts = (idx * gen + rng.random(d - 1)) % 1.0
            pts = np.abs(2.0 * pts - 1.0)
            vals[s] = 0.5 * (_sov(pts, l, b).mean() + _sov(1.0 - pts, l, b).mean())
        used += 2 * n * shifts
        est = vals.mean()
        err = 3.0 * vals.std(ddof=1) / np.sqrt(shifts)
        if err <= tol or used + 4 * n * shifts > max_points:
            return float(np.clip(est, 0.0, 1.0)), float(err)
        n *= 2


def orthant_probability(mean, cov, method="auto", rng=None, tol=5e-4):
    """P(Y >= 0 componentwise) for Y ~ N(mean, cov), stacked over leading axes.

    ``method`` is ``"auto"`` (exact reductions for d <= 3, lattice QMC above)
    or ``"genz"`` (lattice QMC for every problem).
    """
    mean = np.asarray(mean, dtype=float)
    cov = symmetrize(cov)
    d = mean.shape[-1]
    if method == "auto" and d <= 3:
        b, corr = _standardize(mean, cov)
        if d == 1:
            return _orthant_1d(b)
        if d == 2:
            return _orthant_2d(b, corr)
        return _orthant_3d(b, corr)
    if method not in ("auto", "genz"):
        raise ValueError(f"unknown method {method!r}")
    flat_m = mean.reshape(-1, d)
    flat_c = cov.reshape(-1, d, d)
    out = np.array([genz_orthant(m, c, rng=rng, tol=tol)[0] for m, c in zip(flat_m, flat_c)])
    return out.reshape(mean.shape[:-1])


def _difference_operators(k):
    ops = np.zeros((k, k - 1, k))
    for i in range(k):
        others = [j for j in range(k) if j != i]
        ops[i, :, i] = 1.0
        ops[i, np.arange(k - 1), others] = -1.0
    return ops


_DEGENERATE = 1e-13


def superiority_probabilities(law_or_mean, cov=None, method="auto", rng=None, tol=5e-4):
    """P(component k is the maximum) for every k of a Gaussian vector.

    Accepts an :class:`MvnLaw` or ``(mean, cov)`` arrays stacked over leading
    axes.  Each probability is the non-negative orthant probability of the
    differences ``eta_k - eta_j`` (j != k).
    """
    if isinstance(law_or_mean, MvnLaw):
        mean, cov = law_or_mean.mean, law_or_mean.cov
    else:
        mean = np.asarray(law_or_mean, dtype=float)
    cov = symmetrize(cov)
    k = mean.shape[-1]
    if k < 2:
        raise ValueError("need at least two components")
    ops = _difference_operators(k)
    dm = np.einsum("kij,...j->...ki", ops, mean)
    dc = ops @ cov[..., None, :, :] @ ops.transpose(0, 2, 1)
    var = np.diagonal(dc, axis1=-2, axis2=-1)
    scale = np.maximum(np.abs(np.diagonal(cov, axis1=-2, axis2=-1)).max(-1), 1.0)
    degenerate = var <= _DEGENERATE * scale[..., None, None]
    if np.any(np.linalg.eigvalsh(dc) < -1e-9 * scale[..., None, None]):
        raise ValueError("difference covariance is not positive semi-definite")
    if not degenerate.any():
        return orthant_probability(dm, dc, method=method, rng=rng, tol=tol)

    # rare path: drop zero-variance differences after checking them at the mean
    flat_m = dm.reshape(-1, k - 1)
    flat_c = dc.reshape(-1, k - 1, k - 1)
    flat_deg = degenerate.reshape(-1, k - 1)
    out = np.empty(flat_m.shape[0])
    for i, (m, c, deg) in enumerate(zip(flat_m, flat_c, flat_deg)):
        if np.any(m[deg] < 0.0):
            out[i] = 0.0
        elif deg.all():
            out[i] = 1.0
        else:
            keep = ~deg
            out[i] = orthant_probability(m[keep], c[np.ix_(keep, keep)], method=method, rng=rng, tol=tol)
    out = out.reshape(dm.shape[:-1])
    # exact ties share the mass equally
    total = out.sum(-1, keepdims=True)
    return np.where(total > 0, out / np.where(total > 0, total, 1.0), 1.0 / k)
