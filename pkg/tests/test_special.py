import numpy as np
import pytest
from scipy import special as sps

from qoc.special import beta_cdf, beta_sf, betainc


@pytest.mark.parametrize("a,b,x", [(1, 1, 0.3), (2.5, 7, 0.2), (51, 2, 0.95), (300, 250, 0.55), (0.5, 0.5, 0.01)])
def test_betainc_matches_scipy(a, b, x):
    assert abs(betainc(a, b, x) - sps.betainc(a, b, x)) < 1e-12


def test_vectorized_and_scalar_agree():
    a = np.array([1.0, 3.0, 20.0, 40.0])
    b = np.array([2.0, 5.0, 31.0, 11.0])
    x = np.array([0.1, 0.4, 0.4, 0.9])
    vec = betainc(a, b, x)
    assert np.allclose(vec, [betainc(*t) for t in zip(a, b, x)], atol=1e-14, rtol=0)
    assert np.allclose(vec, sps.betainc(a, b, x), atol=1e-12, rtol=0)


def test_endpoints_and_sf():
    assert betainc(2, 3, 0.0) == 0.0 and betainc(2, 3, 1.0) == 1.0
    assert abs(beta_sf(0.4, 26, 26) - (1 - beta_cdf(0.4, 26, 26))) < 1e-13
    # far upper tail keeps relative accuracy
    assert abs(beta_sf(0.999, 2, 50) / sps.betainc(50, 2, 0.001) - 1) < 1e-10


def test_invalid_inputs():
    with pytest.raises(ValueError):
        betainc(0, 1, 0.5)
    with pytest.raises(ValueError):
        betainc(1, 1, 1.5)
