"""Q-approximation of the two-arm design with external controls at interim looks.

Interim futility decisions use a logistic model on (1, x1, x2, arm) fitted to
external controls plus the accumulating trial data; the final analysis is a
pooled two-proportion z test on the trial data only.  Per replicate, the
runner draws an external Q-likelihood and, for every stage, jointly drawn
centers of the logistic (IA) and per-arm Bernoulli (FA) models.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtri

from qoc._linalg import chol_psd, inv_spd
from qoc.asymptotics import AnalysisModel, Allocation, asymptotic_triple, bernoulli_arms_model, joint_center_law
from qoc.designs.protocols import analysis_profile_weights, ex3_external_design, ex3_ia_design
from qoc.mc.posterior import z_statistic
from qoc.oc import mean_estimate, proportion
from qoc.parallel import run_blocks

PREDICTIVE_CHUNK = 256


@dataclass(frozen=True)
class _Laws:
    ext_mean: np.ndarray      # external center law (3-d), or None without external data
    ext_factor: np.ndarray
    ext_curv: np.ndarray      # padded 4x4 curvature
    stage_means: list         # per stage, stacked (beta, gamma) center means (6,)
    stage_factors: list       # per stage, Cholesky factor of the center covariance
    beta_curv: list           # per stage 4x4
    gamma_curv: list          # per stage 2x2
    prior_prec: np.ndarray
    arm_counts: np.ndarray    # (S, 2)
    profiles: np.ndarray      # analysis profiles (x1, x2)
    weights: np.ndarray       # population trial profile weights over analysis profiles


def external_laws(protocol, scenario):
    trial = scenario.trial
    ia_model = AnalysisModel("logistic", ex3_ia_design())
    fa_model = bernoulli_arms_model(2)
    counts = protocol.stage_arm_counts
    n_prof = trial.profile_probs.size
    means, factors, jb, jg = [], [], [], []
    for c in counts:
        n = int(c.sum())
        alloc = Allocation.fixed(c, n_profiles=n_prof, n=n)
        thetas, curv, cov = joint_center_law(trial, [ia_model, fa_model], alloc)
        means.append(np.concatenate(thetas))
        factors.append(chol_psd(cov / n))
        jb.append(n * curv[0])
        jg.append(n * curv[1])

    ext_mean = ext_factor = None
    ext_curv = np.zeros((4, 4))
    if protocol.n_external > 0:
        red = scenario.external_reduced
        model = AnalysisModel("logistic", ex3_external_design())
        alloc = Allocation(np.ones((n_prof, 1)), protocol.n_external)
        trip = asymptotic_triple(red, model, alloc)
        ext_mean = trip.theta_star
        ext_factor = chol_psd(trip.V_star / protocol.n_external)
        ext_curv[:3, :3] = protocol.n_external * trip.J_star

    profiles, weights = analysis_profile_weights(trial)
    return _Laws(
        ext_mean, ext_factor, ext_curv, means, factors, jb, jg,
        np.eye(4) / protocol.prior_var, counts, profiles, weights,
    )


def predictive_operator(profiles):
    """Map beta (4,) to the linear predictors of every (arm, profile) cell, (4, 2X)."""
    X = profiles.shape[0]
    ops = []
    for k in (0, 1):
        ops.append(np.column_stack([np.ones(X), profiles, np.full(X, float(k))]))
    return np.vstack(ops).T


def predictive_success(beta_mean, beta_factor, ybar_obs, n_obs, n_tot, profiles, weights, M, z_crit, rng):
    """Posterior predictive P(final Z > z_crit) for a stack of interim states.

    ``beta_mean`` (B, 4) with a shared posterior covariance factor, or
    ``beta_factor=None`` with ``beta_mean`` already holding draws (B, M, 4).
    ``weights`` is (X,) or per-state (B, X).  ``ybar_obs`` and ``n_obs`` are the
    observed per-arm means and counts, ``n_tot`` the planned final per-arm counts.
    """
    X = profiles.shape[0]
    op = predictive_operator(profiles)
    if beta_factor is None:
        lin = beta_mean @ op
    else:
        B = beta_mean.shape[0]
        lin = rng.standard_normal((B, M, 4)) @ (beta_factor.T @ op)
        lin += (beta_mean @ op)[:, None, :]
    expit(lin, out=lin)
    w = np.asarray(weights, dtype=float)
    w = w[None, :, None] if w.ndim == 1 else w[:, :, None]
    g0 = np.clip((lin[..., :X] @ w[0] if w.shape[0] == 1 else np.matmul(lin[..., :X], w))[..., 0], 0.0, 1.0)
    g1 = np.clip((lin[..., X:] @ w[0] if w.shape[0] == 1 else np.matmul(lin[..., X:], w))[..., 0], 0.0, 1.0)
    n_fut = n_tot - n_obs
    y0 = rng.binomial(int(n_fut[0]), g0)
    y1 = rng.binomial(int(n_fut[1]), g1)
    t0 = (n_obs[0] * ybar_obs[:, 0:1] + y0) / n_tot[0]
    t1 = (n_obs[1] * ybar_obs[:, 1:2] + y1) / n_tot[1]
    z = z_statistic(t1, t0, n_tot[1], n_tot[0])
    return (z > z_crit).mean(1)


def _external_block(protocol, laws, size, rng):
    S = laws.arm_counts.shape[0]
    z_crit = ndtri(1.0 - protocol.alpha)
    n_tot = laws.arm_counts.sum(0).astype(float)

    h = np.zeros((size, 4))
    prec = laws.prior_prec + laws.ext_curv
    if laws.ext_mean is not None:
        ce = laws.ext_mean + rng.standard_normal((size, 3)) @ laws.ext_factor.T
        h[:, :3] = ce @ laws.ext_curv[:3, :3].T
    hg = np.zeros((size, 2))
    vg = np.zeros((2, 2))
    stopped = np.zeros(size, dtype=bool)
    n_used = np.full(size, float(n_tot.sum()))
    n_obs = np.zeros(2)
    for s in range(S):
        c = laws.stage_means[s] + rng.standard_normal((size, 6)) @ laws.stage_factors[s].T
        h += c[:, :4] @ laws.beta_curv[s].T
        prec = prec + laws.beta_curv[s]
        hg += c[:, 4:] @ laws.gamma_curv[s].T
        vg = vg + laws.gamma_curv[s]
        n_obs = n_obs + laws.arm_counts[s]
        if s == S - 1 or protocol.zeta <= 0.0:
            continue
        cov = inv_spd(prec)
        factor = chol_psd(cov)
        ybar = np.clip(np.linalg.solve(vg, hg.T).T, 0.0, 1.0)
        active = np.flatnonzero(~stopped)
        for lo in range(0, active.size, PREDICTIVE_CHUNK):
            idx = active[lo : lo + PREDICTIVE_CHUNK]
            pp = predictive_success(
                h[idx] @ cov, factor, ybar[idx], n_obs, n_tot,
                laws.profiles, laws.weights, protocol.M, z_crit, rng,
            )
            stop_now = pp <= protocol.zeta
            stopped[idx[stop_now]] = True
            n_used[idx[stop_now]] = n_obs.sum()
    gamma = np.clip(np.linalg.solve(vg, hg.T).T, 0.0, 1.0)
    z = z_statistic(gamma[:, 1], gamma[:, 0], n_tot[1], n_tot[0])
    reject = ~stopped & (z > z_crit)
    return np.stack([reject, stopped, n_used])


def summarize_external(out, seconds):
    return {
        "reject_prob": proportion("reject_prob", out[0].astype(bool), seconds),
        "stop_prob": proportion("stop_prob", out[1].astype(bool), seconds),
        "ess": mean_estimate("ess", out[2], seconds),
    }


def q_external_data_run(protocol, scenario, R, seed, workers=1):
    """Rejection probability, early-stopping probability and expected sample size."""
    laws = external_laws(protocol, scenario)
    t0 = time.perf_counter()
    parts = run_blocks(_external_block, R, seed, (protocol, laws), workers)
    return summarize_external(np.concatenate(parts, axis=1), time.perf_counter() - t0)
