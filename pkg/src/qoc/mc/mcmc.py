"""Adaptive random-walk Metropolis for Bayesian logistic regression.

The likelihood is evaluated on cell sufficient statistics (distinct design
rows with their success and patient counts), which is exact for discrete
covariates and keeps each iteration at a handful of small vector operations.
The chain starts at the posterior mode, with a proposal covariance built from
the inverse Hessian there.  During burn-in the proposal scale is tuned every
``adapt_every`` iterations toward the target acceptance rate, and in the
second half of burn-in the covariance switches to the empirical one of the
chain so far (Haario-style).
"""

from dataclasses import dataclass

import numpy as np

from qoc._linalg import chol_psd, inv_spd, symmetrize


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 4000
    burn_in: int = 1000
    thin: int = 3
    target_accept: float = 0.234
    adapt_every: int = 100

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn-in must be smaller than the number of iterations")
        if self.thin < 1 or self.adapt_every < 1:
            raise ValueError("thin and adapt_every must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target acceptance must lie in (0, 1)")

    @property
    def n_draws(self):
        return len(range(self.burn_in, self.iterations, self.thin))


def cells_from_dataset(dataset, design):
    """Collapse patients to distinct design rows: (rows, successes, totals)."""
    if dataset.n == 0:
        return np.zeros((0, design.dim)), np.zeros(0), np.zeros(0)
    per_patient = design.rows(dataset.x)[np.arange(dataset.n), dataset.arm]
    rows, inv = np.unique(per_patient, axis=0, return_inverse=True)
    inv = inv.ravel()
    succ = np.bincount(inv, weights=dataset.y, minlength=rows.shape[0])
    tot = np.bincount(inv, minlength=rows.shape[0]).astype(float)
    return rows, succ, tot


def _prior_terms(prior, d):
    if prior is None or prior.flat:
        return np.zeros((d, d)), np.zeros(d)
    return prior.precision, prior.mean


def log_posterior(theta, rows, succ, tot, prior):
    p, mu = _prior_terms(prior, rows.shape[1] if rows.size else np.size(theta))
    eta = rows @ theta
    r = theta - mu
    return float(succ @ eta - tot @ np.logaddexp(0.0, eta) - 0.5 * r @ p @ r)


def logistic_mode(rows, succ, tot, prior=None, tol=1e-10, max_iter=100):
    """Posterior mode (the MLE under a flat prior) by damped Newton.

    Returns ``(mode, hessian)`` with ``hessian`` the negative log-posterior
    Hessian at the mode.
    """
    d = rows.shape[1]
    p, mu = _prior_terms(prior, d)
    theta = mu.copy() if prior is not None and not prior.flat else np.zeros(d)
    obj = log_posterior(theta, rows, succ, tot, prior)
    for _ in range(max_iter):
        eta = rows @ theta
        f = 0.5 * (1.0 + np.tanh(0.5 * eta))
        grad = rows.T @ (succ - tot * f) - p @ (theta - mu)
        hess = symmetrize((rows * (tot * f * (1.0 - f))[:, None]).T @ rows + p)
        if np.linalg.norm(grad) <= tol:
            break
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(d), grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = theta + t * step
            new = log_posterior(cand, rows, succ, tot, prior)
            if new >= obj:
                break
            t *= 0.5
        else:
            break
        theta, obj = cand, new
    eta = rows @ theta
    f = 0.5 * (1.0 + np.tanh(0.5 * eta))
    hess = symmetrize((rows * (tot * f * (1.0 - f))[:, None]).T @ rows + p)
    return theta, hess


def logistic_mle(dataset, design, tol=1e-10):
    rows, succ, tot = cells_from_dataset(dataset, design)
    return logistic_mode(rows, succ, tot, None, tol=tol)[0]



def _rowsum(a):
    return np.add.reduce(a, axis=1)


def _softplus(x):
    # log(1 + e^x); cheaper than logaddexp on (chains, cells) blocks
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _start(rows, succ, tot, prior, d):
    theta, hess = logistic_mode(rows, succ, tot, prior)
    if not np.isfinite(log_posterior(theta, rows, succ, tot, prior)):
        raise ArithmeticError("non-finite log-posterior at the chain start")
    try:
        cov = inv_spd(hess)
    except np.linalg.LinAlgError:
        cov = np.eye(d)
    return theta, cov


def _adapted_factor(burn_hist, it, base_cov, factor, d):
    # empirical covariance of the later part of burn-in so far
    emp = np.cov(burn_hist[it // 4 : it].T) if it // 4 < it - 1 else base_cov
    cov = symmetrize(np.atleast_2d(emp)) + 1e-8 * np.eye(d)
    try:
        return chol_psd(cov * (2.38**2 / d))
    except np.linalg.LinAlgError:
        return factor


def logistic_mcmc_batch(rows, succ, tot, prior, cfg, rngs, stats=None):
    """Independent chains sharing design rows, advanced in lockstep.

    ``succ`` and ``tot`` have shape (B, n_cells) and chain ``b`` draws only
    from ``rngs[b]``, in the same order a lone chain would.  Returns draws of
    shape (B, cfg.n_draws, d).
    """
    rows = np.asarray(rows, dtype=float)
    succ = np.atleast_2d(np.asarray(succ, dtype=float))
    tot = np.atleast_2d(np.asarray(tot, dtype=float))
    B, d = succ.shape[0], rows.shape[1]
    if len(rngs) != B:
        raise ValueError("need one generator per chain")
    seen = tot.any(0)      # cells nobody has observed add nothing to any likelihood
    rows, succ, tot = rows[seen], succ[:, seen], tot[:, seen]
    p, mu = _prior_terms(prior, d)
    theta = np.empty((B, d))
    base_cov = np.empty((B, d, d))
    for b in range(B):
        theta[b], base_cov[b] = _start(rows, succ[b], tot[b], prior, d)
    factor = np.stack([chol_psd(c * (2.38**2 / d)) for c in base_cov])
    log_scale = np.zeros(B)

    # the chains carry theta - mu; the prior term of the log ratio then only
    # needs the step, and empirical covariances are unaffected by the shift
    xt = rows.T
    eta = theta @ xt
    tvec = succ @ rows
    soft = _rowsum(_softplus(eta) * tot)
    resid = theta - mu

    out = np.empty((B, cfg.n_draws, d))
    burn_hist = np.empty((B, cfg.burn_in, d))
    n_out = 0
    accepted = np.zeros(B)
    post_accepted = np.zeros(B)
    it = 0
    while it < cfg.iterations:
        w = min(cfg.adapt_every, cfg.iterations - it)
        if it < cfg.burn_in:
            w = min(w, cfg.burn_in - it)
        z = np.empty((B, w, d))
        logu = np.empty((B, w))
        for b, rng in enumerate(rngs):
            z[b] = rng.standard_normal((w, d))
            logu[b] = np.log(rng.random(w))
        steps = (z @ factor.transpose(0, 2, 1)) * np.exp(log_scale)[:, None, None]
        xs = steps @ xt
        ps = steps @ p
        base = (steps @ tvec[:, :, None])[..., 0] - 0.5 * np.add.reduce(ps * steps, axis=2)
        acc_w = np.zeros(B)
        for i in range(w):
            eta_p = eta + xs[:, i]
            soft_p = _rowsum(_softplus(eta_p) * tot)
            acc = logu[:, i] < base[:, i] - _rowsum(ps[:, i] * resid) - soft_p + soft
            keep = acc[:, None]
            resid += steps[:, i] * keep
            eta += xs[:, i] * keep
            soft = np.where(acc, soft_p, soft)
            acc_w += acc
            j = it + i
            if j < cfg.burn_in:
                burn_hist[:, j] = resid
            elif (j - cfg.burn_in) % cfg.thin == 0:
                out[:, n_out] = resid
                n_out += 1
        accepted += acc_w
        if it >= cfg.burn_in:
            post_accepted += acc_w
        it += w
        if it <= cfg.burn_in:
            log_scale += (acc_w / w - cfg.target_accept) * 2.0 / np.sqrt(it / cfg.adapt_every)
            if it >= cfg.burn_in // 2 and it >= 2 * d:
                for b in range(B):
                    factor[b] = _adapted_factor(burn_hist[b], it, base_cov[b], factor[b], d)
    out += mu
    if stats is not None:
        kept = cfg.iterations - cfg.burn_in
        stats["accept_rate"] = accepted / cfg.iterations
        stats["accept_rate_post"] = post_accepted / kept if kept else np.full(B, np.nan)
        stats["log_scale"] = log_scale
    return out


def logistic_mcmc_cells(rows, succ, tot, prior, cfg, rng, stats=None):
    """Posterior draws, shape (cfg.n_draws, d), from cell sufficient statistics.

    Same chain as one row of ``logistic_mcmc_batch``, with scalar bookkeeping,
    which is several times cheaper per iteration for a lone chain.
    """
    rows = np.asarray(rows, dtype=float)
    succ = np.asarray(succ, dtype=float)
    tot = np.asarray(tot, dtype=float)
    d = rows.shape[1]
    p, mu = _prior_terms(prior, d)
    theta, base_cov = _start(rows, succ, tot, prior, d)
    log_scale = 0.0
    factor = chol_psd(base_cov * (2.38**2 / d))

    xt = rows.T
    eta = rows @ theta
    tvec = rows.T @ succ
    soft = tot @ np.logaddexp(0.0, eta)
    resid = theta - mu
    quad = 0.5 * resid @ p @ resid

    out = np.empty((cfg.n_draws, d))
    burn_hist = np.empty((cfg.burn_in, d))
    n_out = 0
    accepted = 0
    post_accepted = 0
    it = 0
    while it < cfg.iterations:
        w = min(cfg.adapt_every, cfg.iterations - it)
        if it < cfg.burn_in:
            w = min(w, cfg.burn_in - it)
        steps = (rng.standard_normal((w, d)) @ factor.T) * np.exp(log_scale)
        logu = np.log(rng.random(w))
        xs = steps @ xt
        ts = steps @ tvec
        ps = steps @ p
        sps = 0.5 * np.einsum("ij,ij->i", ps, steps)
        acc_w = 0
        for i in range(w):
            eta_p = eta + xs[i]
            soft_p = tot @ np.logaddexp(0.0, eta_p)
            quad_p = quad + ps[i] @ resid + sps[i]
            if logu[i] < ts[i] - (soft_p - soft) - (quad_p - quad):
                theta = theta + steps[i]
                resid = resid + steps[i]
                eta, soft, quad = eta_p, soft_p, quad_p
                acc_w += 1
            j = it + i
            if j < cfg.burn_in:
                burn_hist[j] = theta
            elif (j - cfg.burn_in) % cfg.thin == 0:
                out[n_out] = theta
                n_out += 1
        accepted += acc_w
        if it >= cfg.burn_in:
            post_accepted += acc_w
        it += w
        if it <= cfg.burn_in:
            log_scale += (acc_w / w - cfg.target_accept) * 2.0 / np.sqrt(it / cfg.adapt_every)
            if it >= cfg.burn_in // 2 and it >= 2 * d:
                factor = _adapted_factor(burn_hist, it, base_cov, factor, d)
    if stats is not None:
        kept = cfg.iterations - cfg.burn_in
        stats["accept_rate"] = accepted / cfg.iterations
        stats["accept_rate_post"] = post_accepted / kept if kept else float("nan")
        stats["log_scale"] = log_scale
    return out


def logistic_mcmc(dataset, design, prior, cfg, rng, stats=None):
    rows, succ, tot = cells_from_dataset(dataset, design)
    return logistic_mcmc_cells(rows, succ, tot, prior, cfg, rng, stats)
