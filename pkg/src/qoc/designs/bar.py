"""Q-approximation of the Bayesian adaptive randomization design.

The analysis model is correctly specified, so each stage's Q-likelihood
center is centered at the scenario coefficients with covariance equal to the
inverse stage curvature.  Centers are carried in information form
(``h = V C``), which stays well defined when a tiny stage makes ``V``
singular.
"""

import time

import numpy as np
from scipy.special import expit

from qoc.mvn import superiority_probabilities
from qoc.oc import OCEstimate
from qoc.parallel import run_blocks


def bar_cells(protocol, scenario):
    """Design rows (X, K, d), true cell probabilities (X, K), profile weights (X,)."""
    if scenario.design != protocol.design:
        raise ValueError("the adaptive-randomization scenario must use the analysis design")
    rows = protocol.design.rows(scenario.profiles)
    return rows, expit(rows @ scenario.outcome_params), scenario.profile_probs


def _bar_block(protocol, omega, rows, q, px, method, tol, size, rng):
    n_prof, k, d = rows.shape
    outer = np.einsum("xkd,xke->xkde", rows, rows)
    flat = rows.reshape(-1, d)
    info = q * (1.0 - q)
    prior_prec = np.eye(d) / protocol.prior_var
    rho = np.full((size, n_prof, k), 1.0 / k)
    prec = np.broadcast_to(prior_prec, (size, d, d)).copy()
    h = np.zeros((size, d))
    a = np.zeros((size, n_prof, k))
    w = np.zeros((size, n_prof, k))
    ns = protocol.stage_size
    S = protocol.n_stages
    for s in range(S):
        m = rho * px[None, :, None]
        a += ns * m
        w += ns * m * (1.0 - m)
        if s == S - 1 or not protocol.adaptive:
            continue
        # stage information is a weighted sum of cell outer products, so
        # rows^T diag(sqrt(weight)) is an exact factor for the center noise
        cw = ns * (m * info[None]).reshape(size, -1)
        v = np.einsum("bc,cde->bde", cw, outer.reshape(-1, d, d))
        z = rng.standard_normal((size, cw.shape[1]))
        h += v @ omega + (np.sqrt(cw) * z) @ flat
        prec += v
        cov = np.linalg.inv(prec)
        mean = (cov @ h[..., None])[..., 0]
        eta_mean = mean @ flat.T
        eta_cov = rows[None] @ (cov[:, None] @ rows.transpose(0, 2, 1)[None])
        eta_mean = eta_mean.reshape(size, n_prof, k)
        p = superiority_probabilities(eta_mean, eta_cov, method=method, rng=rng, tol=tol)
        rho = p / p.sum(-1, keepdims=True)
    return np.stack([a, w])


def summarize_allocation(a, w, seconds, prefix=""):
    """ESS and SDSS estimates per (arm, profile) from replicate summaries.

    ``a[r]`` is the expected allocation count and ``w[r]`` its conditional
    multinomial variance in replicate ``r`` (zero for realized counts).
    """
    R = a.shape[0]
    ess = a.mean(0)
    ess_se = a.std(0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros_like(ess)
    phi = (a - ess) ** 2 + w
    sd = np.sqrt(phi.mean(0))
    sd_se = np.where(sd > 0, phi.std(0, ddof=1) / (np.sqrt(R) * 2.0 * np.where(sd > 0, sd, 1.0)), 0.0) if R > 1 else np.zeros_like(sd)
    out = {}
    n_prof, k = ess.shape
    for x in range(n_prof):
        for arm in range(k):
            key = f"k{arm}_x{x}"
            out[f"{prefix}ess_{key}"] = OCEstimate(f"ess_{key}", float(ess[x, arm]), float(ess_se[x, arm]), R, seconds)
            out[f"{prefix}sdss_{key}"] = OCEstimate(f"sdss_{key}", float(sd[x, arm]), float(sd_se[x, arm]), R, seconds)
    return out


def q_bar_run(protocol, scenario, R, seed, workers=1, method="auto", tol=5e-4):
    """Per-(arm, profile) ESS and SDSS of the adaptive-randomization design."""
    rows, q, px = bar_cells(protocol, scenario)
    t0 = time.perf_counter()
    parts = run_blocks(_bar_block, R, seed, (protocol, scenario.outcome_params, rows, q, px, method, tol), workers)
    out = np.concatenate(parts, axis=1)
    return summarize_allocation(out[0], out[1], time.perf_counter() - t0)
