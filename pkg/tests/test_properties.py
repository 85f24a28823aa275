"""Property suites: algebra of Q-likelihoods, orthant probabilities, sampling
laws, stopping monotonicity and reproducibility."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qoc.asymptotics import Allocation, AnalysisModel, DesignMap, Scenario, asymptotic_triple, expected_curvature
from qoc.designs.bar import q_bar_run
from qoc.designs.binary import q_multistage_stop_prob, q_two_arm_power
from qoc.designs.external import q_external_data_run
from qoc.designs.protocols import BarProtocol, ExternalDataProtocol, ExternalDataScenario, TwoArmProtocol
from qoc.mc.binary import mc_multistage_stop_prob, mc_two_arm_power
from qoc.mc.data import simulate_dataset
from qoc.mc.mcmc import cells_from_dataset, logistic_mle, logistic_mode
from qoc.mvn import superiority_probabilities
from qoc.qlik import CenterLaw, GaussianPrior, QLikelihood, combine, posterior_update, sample_center
from qoc.streams import stream

DIM = st.integers(1, 5)


def _spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + 0.5 * np.eye(d)


def _lik(rng, d):
    return QLikelihood(rng.standard_normal(d), _spd(rng, d))


@settings(max_examples=60, deadline=None)
@given(d=DIM, seed=st.integers(0, 2**32 - 1))
def test_combine_precision_additivity(d, seed):
    rng = np.random.default_rng(seed)
    liks = [_lik(rng, d) for _ in range(3)]
    c = combine(liks)
    assert np.allclose(c.curvature, sum(l.curvature for l in liks), atol=1e-12)
    assert np.allclose(c.curvature @ c.center, sum(l.curvature @ l.center for l in liks), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(d=DIM, seed=st.integers(0, 2**32 - 1))
def test_combine_associative_and_commutative(d, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_lik(rng, d) for _ in range(3))
    left = combine([combine([a, b]), c])
    right = combine([a, combine([b, c])])
    flat = combine([c, a, b])
    for other in (right, flat):
        assert np.allclose(left.curvature, other.curvature, atol=1e-10)
        assert np.allclose(left.center, other.center, atol=1e-8 * (1 + np.abs(left.center).max()))


@settings(max_examples=60, deadline=None)
@given(d=DIM, seed=st.integers(0, 2**32 - 1))
def test_flat_prior_identity(d, seed):
    lik = _lik(np.random.default_rng(seed), d)
    post = posterior_update(lik, GaussianPrior(flat=True))
    assert np.array_equal(post.center, lik.center) and np.array_equal(post.curvature, lik.curvature)


@settings(max_examples=25, deadline=None)
@given(
    omega=st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4),
    ratio=st.floats(0.2, 0.8),
)
def test_sandwich_reduction_under_correct_specification(omega, ratio):
    prof = np.array(list(itertools.product([0, 1], repeat=2)), float)
    design = DesignMap("main", 2, (0, 1))
    scen = Scenario(np.array(omega), prof, np.full(4, 0.25), design)
    t = asymptotic_triple(scen, AnalysisModel("logistic", design), Allocation.fixed([1 - ratio, ratio], 4), True)
    assert np.allclose(t.I_star, t.J_star, atol=1e-12)
    assert np.allclose(t.V_star, np.linalg.inv(t.J_star), rtol=1e-8, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(k=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_superiority_sums_to_one(k, seed):
    rng = np.random.default_rng(seed)
    p = superiority_probabilities(rng.standard_normal(k), _spd(rng, k), rng=stream(seed % 1000))
    assert np.all(p >= -1e-12)
    assert abs(p.sum() - 1.0) < 2e-3   # Genz QMC error budget (5e-4 per entry) for K >= 5


@settings(max_examples=20, deadline=None)
@given(k=st.integers(2, 6), rho=st.floats(-0.15, 0.9), mu=st.floats(-2, 2), var=st.floats(0.1, 5))
def test_superiority_exchangeable_is_uniform(k, rho, mu, var):
    rho = max(rho, -1.0 / (k - 1) + 0.05)
    cov = var * ((1 - rho) * np.eye(k) + rho)
    p = superiority_probabilities(np.full(k, mu), cov, rng=stream(3))
    assert np.allclose(p, 1.0 / k, atol=5e-4)


def _ex3_scenario():
    prof = np.array(list(itertools.product([0, 1], repeat=3)), float)
    return Scenario(np.array([-0.6, 0.5, -0.4, 0.7, 0.8]), prof, np.full(8, 1 / 8), DesignMap("main", 2, (0, 1, 2)))


def test_sampled_centers_match_mle_distribution():
    # misspecified IA model (x3 omitted): sampled Q centers vs simulated MLEs, coordinate-wise KS
    scen = _ex3_scenario()
    design = DesignMap("main", 2, (0, 1))
    model = AnalysisModel("logistic", design)
    n, counts = 600, [200, 400]
    t = asymptotic_triple(scen, model, Allocation.fixed(counts, 8, n))
    law = CenterLaw.from_asymptotics(t.theta_star, t.V_star, n)
    centers = sample_center(law, stream(21), size=2000)
    mles = np.array([logistic_mle(simulate_dataset(scen, n, stream(22, r), arm_counts=counts), design)
                     for r in range(2000)])
    for j in range(design.dim):
        assert stats.ks_2samp(centers[:, j], mles[:, j]).pvalue > 0.001


def test_observed_expected_information_ratio_concentrates():
    scen = _ex3_scenario()
    design = DesignMap("main", 2, (0, 1))
    model = AnalysisModel("logistic", design)
    spreads = []
    for n in (150, 1500):
        counts = [n // 3, n - n // 3]
        alloc = Allocation.fixed(counts, 8, n)
        t = asymptotic_triple(scen, model, alloc)
        expected = n * t.J_star
        ratios = []
        for r in range(300):
            rows, succ, tot = cells_from_dataset(simulate_dataset(scen, n, stream(23, n, r), arm_counts=counts), design)
            _, obs = logistic_mode(rows, succ, tot)
            ratios.append(np.diag(obs) / np.diag(expected))
        ratios = np.array(ratios)
        spreads.append(ratios.std(0))
        if n == 1500:
            assert np.allclose(ratios.mean(0), 1.0, atol=0.02)
    # spread shrinks roughly like 1/sqrt(n)
    assert np.all(spreads[1] < 0.5 * spreads[0])


@pytest.mark.parametrize("engine", ["q", "mc"])
def test_stop_probability_monotone_in_threshold(engine):
    stages = ((20, 20), (20, 20), (20, 20))
    probs = []
    for lam in (0.0, 0.05, 0.1, 0.2, 0.3, 0.5):
        proto = TwoArmProtocol(stage_sizes=stages, futility=(lam, lam), M=500)
        if engine == "q":
            probs.append(q_multistage_stop_prob(proto, (0.4, 0.5), 20_000, 8)["stop_prob"].estimate)
        else:
            probs.append(mc_multistage_stop_prob(proto, (0.4, 0.5), 300, 8)["stop_prob"].estimate)
    assert probs[0] == 0.0
    assert all(b >= a for a, b in zip(probs, probs[1:]))


def _same(a, b):
    return a.keys() == b.keys() and all(
        a[k].estimate == b[k].estimate and a[k].se == b[k].se and a[k].replicates == b[k].replicates for k in a
    )


def test_bit_exact_across_thread_counts():
    two = TwoArmProtocol(M=2000)
    assert _same({"p": q_two_arm_power(two, (0.4, 0.61), 9000, 4, 1)}, {"p": q_two_arm_power(two, (0.4, 0.61), 9000, 4, 3)})
    assert _same({"p": mc_two_arm_power(two, (0.4, 0.61), 150, 4, 1)}, {"p": mc_two_arm_power(two, (0.4, 0.61), 150, 4, 3)})
    ext = ExternalDataScenario(_ex3_scenario())
    assert _same(q_external_data_run(ExternalDataProtocol(), ext, 5000, 4, 1),
                 q_external_data_run(ExternalDataProtocol(), ext, 5000, 4, 2))
    proto = BarProtocol(stage_size=40)
    om = np.zeros(12)
    om[:4] = (-0.5, 0.3, 0.2, 0.4)
    scen = Scenario(om, np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float), np.full(4, 0.25), proto.design)
    assert _same(q_bar_run(proto, scen, 5000, 4, 1), q_bar_run(proto, scen, 5000, 4, 2))
