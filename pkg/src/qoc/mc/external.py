"""Monte Carlo baseline for the external-control design.

Each replicate simulates external controls and every trial stage patient by
patient.  At an interim look the IA logistic posterior is sampled by MCMC and
the predictive probability of a significant final z test uses the empirical
distribution of the enrolled patients' analysis profiles.
"""

import time

import numpy as np
from scipy.special import ndtri

from qoc.designs.external import predictive_success, summarize_external
from qoc.designs.protocols import analysis_profile_weights, ex3_ia_design
from qoc.mc.binary import run_replicates
from qoc.mc.data import concat, simulate_dataset
from qoc.mc.mcmc import McmcConfig, cells_from_dataset, logistic_mcmc_cells
from qoc.mc.posterior import z_statistic
from qoc.qlik import GaussianPrior
from qoc.streams import stream


def empirical_profile_weights(dataset, profiles, covariates):
    """Share of enrolled patients in each analysis profile (rows of ``profiles``)."""
    sub = dataset.x[:, list(covariates)]
    match = np.all(sub[:, None, :] == profiles[None, :, :], axis=2)
    return match.sum(0) / dataset.n


def _external_chunk(protocol, scenario, cfg, start, stop, seed):
    trial = scenario.trial
    design = ex3_ia_design()
    counts = protocol.stage_arm_counts
    S = counts.shape[0]
    n_tot = counts.sum(0).astype(float)
    z_crit = ndtri(1.0 - protocol.alpha)
    prior = GaussianPrior.isotropic(design.dim, protocol.prior_var)
    profiles, _ = analysis_profile_weights(trial)
    pick = np.arange(protocol.M) % cfg.n_draws
    out = np.zeros((3, stop - start))
    for i, r in enumerate(range(start, stop)):
        parts = []
        if protocol.n_external > 0:
            parts.append(simulate_dataset(scenario.external, protocol.n_external, stream(seed, r, S),
                                          arm_counts=[protocol.n_external, 0]))
        n_ext = len(parts)
        stopped = False
        n_used = n_tot.sum()
        for s in range(S):
            rng = stream(seed, r, s)
            parts.append(simulate_dataset(trial, int(counts[s].sum()), rng, arm_counts=counts[s]))
            if s == S - 1 or protocol.zeta <= 0.0:
                continue
            trial_data = concat(parts[n_ext:])
            succ_k, tot_k = trial_data.arm_summary(2)
            rows, succ, tot = cells_from_dataset(concat(parts), design)
            draws = logistic_mcmc_cells(rows, succ, tot, prior, cfg, rng)[pick]
            w = empirical_profile_weights(trial_data, profiles, design.covariates)
            pp = predictive_success(
                draws[None], None, (succ_k / tot_k)[None], tot_k, n_tot,
                profiles, w[None], protocol.M, z_crit, rng,
            )[0]
            if pp <= protocol.zeta:
                stopped = True
                n_used = tot_k.sum()
                break
        if not stopped:
            succ_k, tot_k = concat(parts[n_ext:]).arm_summary(2)
            z = z_statistic(succ_k[1] / tot_k[1], succ_k[0] / tot_k[0], tot_k[1], tot_k[0])
            out[0, i] = z > z_crit
        out[1, i] = stopped
        out[2, i] = n_used
    return out


def mc_external_data_run(protocol, scenario, R, seed, cfg=None, workers=1):
    """Rejection probability, early-stopping probability and expected sample size."""
    cfg = McmcConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    out = run_replicates(_external_chunk, R, seed, (protocol, scenario, cfg), workers, chunk=8)
    return summarize_external(out, time.perf_counter() - t0)
