import numpy as np
import pytest
from scipy import stats

from oracles import argmax_probs_mc, bvn_cdf as bvn_ref, mvn_orthant
from qoc.mvn import (
    MvnLaw,
    bvn_cdf,
    genz_orthant,
    normal_cdf,
    orthant_probability,
    sample_mvn,
    superiority_probabilities,
)
from qoc.streams import stream


def test_normal_cdf_reference_points():
    assert abs(normal_cdf(1.959964) - 0.975) < 1e-6
    assert abs(normal_cdf(-10.0) - stats.norm.cdf(-10.0)) / stats.norm.cdf(-10.0) < 1e-10


@pytest.mark.parametrize("r", [-0.95, -0.6, -0.2, 0.0, 0.1, 0.5, 0.8, 0.9, 0.97])
@pytest.mark.parametrize("h,k", [(0.0, 0.0), (-1.2, 0.7), (1.5, 2.0), (-2.5, -0.3)])
def test_bvn_against_scipy(h, k, r):
    assert abs(bvn_cdf(h, k, r) - bvn_ref(h, k, r)) < 2e-7


def test_bvn_zero_correlation_factorizes():
    assert abs(bvn_cdf(0.3, -0.4, 0.0) - stats.norm.cdf(0.3) * stats.norm.cdf(-0.4)) < 1e-14


def test_orthant_exact_small_dims():
    assert abs(orthant_probability([0.0], [[1.0]]) - 0.5) < 1e-15
    cov2 = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert abs(orthant_probability([0.0, 0.0], cov2) - (0.25 + np.arcsin(0.5) / (2 * np.pi))) < 1e-10
    cov3 = np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]])
    # trivariate orthant with equal correlations: 1/8 + 3 asin(r) / (4 pi)
    expect = 0.125 + 3 * np.arcsin(0.5) / (4 * np.pi)
    # 20-node quadrature in three dimensions: ~1e-5, well inside the 5e-4 target
    assert abs(orthant_probability(np.zeros(3), cov3) - expect) < 2e-5


def test_orthant_3d_against_scipy():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a = rng.standard_normal((3, 3))
        cov = a @ a.T + 0.3 * np.eye(3)
        mean = rng.standard_normal(3)
        assert abs(orthant_probability(mean, cov) - mvn_orthant(mean, cov)) < 5e-5


def test_genz_qmc_error_and_determinism():
    cov = 0.5 * np.eye(4) + 0.5
    mean = np.array([0.2, -0.1, 0.3, 0.0])
    p, err = genz_orthant(mean, cov, rng=stream(1, 0))
    assert abs(p - mvn_orthant(mean, cov)) < 5e-4
    assert err <= 5e-4
    assert genz_orthant(mean, cov, rng=stream(1, 0))[0] == p


def test_superiority_exchangeable_and_sums_to_one():
    k = 4
    cov = 0.4 * np.eye(k) + 0.6
    p = superiority_probabilities(np.zeros(k), cov)
    assert np.allclose(p, 0.25, atol=2e-5)
    assert np.ptp(p) < 1e-12
    rng = np.random.default_rng(0)
    a = rng.standard_normal((k, k))
    cov = a @ a.T + np.eye(k)
    mean = rng.standard_normal(k)
    p = superiority_probabilities(mean, cov)
    assert abs(p.sum() - 1) < 1e-4
    assert np.allclose(p, argmax_probs_mc(mean, cov), atol=3e-3)


def test_superiority_batched_matches_single():
    rng = np.random.default_rng(1)
    means = rng.standard_normal((3, 2, 4))
    a = rng.standard_normal((4, 4))
    cov = np.broadcast_to(a @ a.T + np.eye(4), (3, 2, 4, 4))
    batch = superiority_probabilities(means, cov)
    assert batch.shape == (3, 2, 4)
    assert np.allclose(batch[1, 0], superiority_probabilities(means[1, 0], cov[1, 0]), atol=1e-12)


def test_superiority_degenerate_difference():
    # arms 0 and 1 identical: the tie is split and probabilities still sum to one
    cov = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    p = superiority_probabilities(np.zeros(3), cov)
    assert abs(p.sum() - 1) < 1e-9 and abs(p[0] - p[1]) < 1e-12


def test_superiority_rejects_non_psd():
    with pytest.raises(ValueError):
        superiority_probabilities(np.zeros(3), np.array([[1, 2, 0], [2, 1, 0], [0, 0, 1.0]]))


def test_sample_mvn_moments():
    law = MvnLaw(np.array([1.0, -2.0]), np.array([[2.0, 0.6], [0.6, 1.0]]))
    z = sample_mvn(law, stream(5), size=200_000)
    assert np.allclose(z.mean(0), law.mean, atol=0.015)
    assert np.allclose(np.cov(z.T), law.cov, atol=0.03)
