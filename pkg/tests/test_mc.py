import itertools

import numpy as np
import pytest
from scipy import integrate, stats

from oracles import beta_superiority_quad
from qoc.asymptotics import DesignMap, Scenario, bernoulli_scenario
from qoc.mc.data import apportion, concat, simulate_dataset
from qoc.mc.mcmc import (
    McmcConfig,
    cells_from_dataset,
    logistic_mcmc,
    logistic_mcmc_batch,
    logistic_mcmc_cells,
    logistic_mle,
    logistic_mode,
)
from qoc.mc.posterior import beta_posterior_tail, dataset_z_statistic, posterior_superiority_mc, z_statistic
from qoc.qlik import GaussianPrior
from qoc.streams import stream


def test_apportion():
    assert apportion(36, (1, 2)).tolist() == [12, 24]
    assert apportion(38, (1, 2)).tolist() == [13, 25]
    assert apportion(10, (1, 1, 1)).sum() == 10


def test_simulate_fixed_counts_and_rates():
    scen = bernoulli_scenario([0.4, 0.61])
    d = simulate_dataset(scen, 100_000, stream(1), arm_counts=[50_000, 50_000])
    succ, tot = d.arm_summary(2)
    assert tot.tolist() == [50_000, 50_000]
    se = np.sqrt(np.array([0.24, 0.61 * 0.39]) / 50_000)
    assert np.all(np.abs(succ / tot - [0.4, 0.61]) < 4 * se)


def test_simulate_with_randomization_probabilities():
    prof = np.array([[0.0], [1.0]])
    scen = Scenario(np.array([0.0, 0.0, 0.0]), prof, np.array([0.5, 0.5]), DesignMap("main", 2, (0,)))
    rho = np.array([[1.0, 0.0], [0.25, 0.75]])
    d = simulate_dataset(scen, 40_000, stream(2), rho=rho)
    a, t = d.cell_counts(2, 2)
    assert t[0, 1] == 0
    assert abs(t[1, 1] / t[1].sum() - 0.75) < 0.02


def test_concat_tracks_stages():
    scen = bernoulli_scenario([0.5, 0.5])
    parts = [simulate_dataset(scen, n, stream(3, i)) for i, n in enumerate((4, 6))]
    d = concat(parts)
    assert d.n == 10 and d.stages == (4, 10)


def test_beta_tail_against_scipy():
    assert abs(beta_posterior_tail(27, 50) - stats.beta.sf(0.4, 28, 24)) < 1e-12


def test_superiority_mc_against_quadrature():
    exact = beta_superiority_quad(1 + 61, 1 + 39, 1 + 40, 1 + 60)
    p = posterior_superiority_mc([40, 61], [100, 100], 200_000, stream(4))
    assert abs(p - exact) < 3 * np.sqrt(exact * (1 - exact) / 200_000)


def test_z_statistic():
    assert abs(z_statistic(0.6, 0.4, 100, 100) - 0.2 / np.sqrt(0.25 * 0.02)) < 1e-12
    assert abs(z_statistic(0.6, 0.4, 100, 100) - 2.8284271) < 1e-6
    assert z_statistic(0.3, 0.3, 40, 80) == 0.0
    assert z_statistic(0.4, 0.6, 100, 100) == -z_statistic(0.6, 0.4, 100, 100)
    assert z_statistic(0.0, 0.0, 10, 10) == 0.0 and z_statistic(1.0, 1.0, 10, 10) == 0.0


def test_dataset_z_needs_both_arms():
    d = simulate_dataset(bernoulli_scenario([0.5, 0.5]), 5, stream(5), arm_counts=[5, 0])
    with pytest.raises(ValueError):
        dataset_z_statistic(d)


def _logistic_data(n, seed):
    prof = np.array(list(itertools.product([0, 1], repeat=2)), float)
    design = DesignMap("main", 2, (0, 1))
    scen = Scenario(np.array([-0.4, 0.6, -0.5, 0.9]), prof, np.full(4, 0.25), design)
    return simulate_dataset(scen, n, stream(seed), arm_counts=apportion(n, (1, 2))), design


def test_mcmc_posterior_mean_near_mle():
    data, design = _logistic_data(4000, 6)
    mle = logistic_mle(data, design)
    stats_ = {}
    draws = logistic_mcmc(data, design, GaussianPrior.isotropic(4, 1e4), McmcConfig(), stream(7), stats_)
    sd = draws.std(0)
    assert np.all(np.abs(draws.mean(0) - mle) < 3 * sd)
    assert 0.1 <= stats_["accept_rate_post"] <= 0.5


def test_mcmc_prior_recovery():
    rows = np.zeros((0, 4))
    cfg = McmcConfig(iterations=400_000, burn_in=10_000, thin=10)
    draws = logistic_mcmc_cells(rows, np.zeros(0), np.zeros(0), GaussianPrior.isotropic(4, 10.0), cfg, stream(8))
    # within 5% of the prior scale for the mean, 5% of 10 for every covariance entry
    assert np.all(np.abs(draws.mean(0)) < 0.05 * np.sqrt(10.0))
    assert np.all(np.abs(np.cov(draws.T) - 10.0 * np.eye(4)) < 0.05 * 10.0)


def test_mcmc_deterministic():
    data, design = _logistic_data(300, 9)
    prior = GaussianPrior.isotropic(4, 10.0)
    a = logistic_mcmc(data, design, prior, McmcConfig(), stream(10))
    b = logistic_mcmc(data, design, prior, McmcConfig(), stream(10))
    assert np.array_equal(a, b)


def test_lockstep_chains_match_lone_chains():
    rng = np.random.default_rng(14)
    rows = np.column_stack([np.ones(16), rng.integers(0, 2, (16, 5))]).astype(float)
    tot = rng.integers(0, 8, (6, 16)).astype(float)
    tot[:, 3] = 0                      # a cell nobody has observed
    succ = np.floor(0.4 * tot)
    prior = GaussianPrior.isotropic(6, 10.0)
    cfg = McmcConfig(iterations=1500, burn_in=500)
    batch = logistic_mcmc_batch(rows, succ, tot, prior, cfg, [stream(15, b) for b in range(6)])
    for b in range(6):
        lone = logistic_mcmc_cells(rows, succ[b], tot[b], prior, cfg, stream(15, b))
        assert np.allclose(batch[b], lone, rtol=0, atol=1e-9)


def test_intercept_only_chain_matches_grid_posterior():
    rows, succ, tot = np.ones((1, 1)), np.array([37.0]), np.array([90.0])
    prior = GaussianPrior.isotropic(1, 10.0)
    cfg = McmcConfig(iterations=60_000, burn_in=5000, thin=3)
    draws = logistic_mcmc_cells(rows, succ, tot, prior, cfg, stream(11))
    grid = np.linspace(-4, 3, 20001)
    logp = 37 * grid - 90 * np.logaddexp(0, grid) - grid**2 / 20
    w = np.exp(logp - logp.max())
    mean = integrate.trapezoid(grid * w, grid) / integrate.trapezoid(w, grid)
    assert abs(draws.mean() - mean) < 0.02 * abs(mean)


def test_mode_and_cells():
    data, design = _logistic_data(2000, 12)
    rows, succ, tot = cells_from_dataset(data, design)
    assert tot.sum() == 2000 and rows.shape[0] == 8
    mode, h = logistic_mode(rows, succ, tot)
    assert np.allclose(mode, logistic_mle(data, design))
    assert np.all(np.linalg.eigvalsh(h) > 0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_mcmc_bad_init_raises():
    rows, succ, tot = np.ones((1, 1)), np.array([1.0]), np.array([2.0])
    with pytest.raises((ValueError, ArithmeticError)):
        logistic_mcmc_cells(rows, np.array([np.nan]), tot, GaussianPrior.isotropic(1, 10.0), McmcConfig(), stream(13))
