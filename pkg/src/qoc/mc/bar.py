"""Monte Carlo baseline for the Bayesian adaptive randomization design."""

import time

import numpy as np

from qoc.designs.bar import bar_cells, summarize_allocation
from qoc.mc.binary import run_replicates
from qoc.mc.data import simulate_dataset
from qoc.mc.mcmc import McmcConfig, logistic_mcmc_batch
from qoc.qlik import GaussianPrior


BAR_CHUNK = 64   # replicates whose chains share one lockstep sampler


def argmax_frequencies(eta_draws):
    """Fraction of draws in which each arm is best; eta_draws has shape (M, X, K)."""
    k = eta_draws.shape[-1]
    best = eta_draws.argmax(-1)
    return np.stack([(best == j).mean(0) for j in range(k)], axis=-1)


def _bar_chunk(protocol, scenario, cfg, start, stop, seed):
    # replicates advance stage by stage together so their MCMC chains run in lockstep
    from qoc.streams import stream

    rows, _, _ = bar_cells(protocol, scenario)
    n_prof, k, d = rows.shape
    flat_rows = rows.reshape(n_prof * k, d)
    prior = GaussianPrior.isotropic(d, protocol.prior_var)
    reps = range(start, stop)
    B = len(reps)
    rho = np.full((B, n_prof, k), 1.0 / k)
    succ = np.zeros((B, n_prof * k))
    tot = np.zeros((B, n_prof * k))
    for s in range(protocol.n_stages):
        rngs = [stream(seed, r, s) for r in reps]
        for i, rng in enumerate(rngs):
            data = simulate_dataset(scenario, protocol.stage_size, rng, rho=rho[i])
            a, t = data.cell_counts(n_prof, k)
            succ[i] += a.ravel()
            tot[i] += t.ravel()
        if s == protocol.n_stages - 1 or not protocol.adaptive:
            continue
        draws = logistic_mcmc_batch(flat_rows, succ, tot, prior, cfg, rngs)
        for i in range(B):
            p = argmax_frequencies(np.einsum("xkd,md->mxk", rows, draws[i]))
            rho[i] = p / p.sum(-1, keepdims=True)
    out = np.zeros((2, B, n_prof, k))
    out[0] = tot.reshape(B, n_prof, k)
    return out


def mc_bar_run(protocol, scenario, R, seed, cfg=None, workers=1):
    """Realized per-(arm, profile) allocation counts summarized as ESS and SDSS."""
    cfg = McmcConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    out = run_replicates(_bar_chunk, R, seed, (protocol, scenario, cfg), workers, chunk=BAR_CHUNK, axis=1)
    return summarize_allocation(out[0], out[1], time.perf_counter() - t0)
