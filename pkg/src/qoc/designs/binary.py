"""Q-approximation runners for single- and two-arm binary-outcome trials."""

import time

import numpy as np

from qoc.asymptotics import Allocation, asymptotic_triple, bernoulli_arms_model, bernoulli_scenario
from qoc.mvn import normal_cdf
from qoc.oc import proportion
from qoc.parallel import run_blocks
from qoc.qlik import CenterLaw, beta_to_gaussian_prior, posterior_update_batch, sample_center


def _check_rates(rates):
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if np.any((rates <= 0) | (rates >= 1)):
        raise ValueError("response rates must lie strictly inside (0, 1)")
    return rates


def _stage_law(rates, n_arm):
    """Center law and curvature of one stage with ``n_arm[k]`` patients per arm."""
    n_arm = np.asarray(n_arm, dtype=float)
    n = n_arm.sum()
    alloc = Allocation.fixed(n_arm, n_profiles=1, n=int(n))
    trip = asymptotic_triple(bernoulli_scenario(rates), bernoulli_arms_model(rates.size), alloc)
    return CenterLaw.from_asymptotics(trip.theta_star, trip.V_star, n), n * trip.J_star


def _single_arm_block(law, curvature, prior, ref, threshold, size, rng):
    c = sample_center(law, rng, size)
    cp, vp = posterior_update_batch(c, curvature, prior)
    tail = normal_cdf((cp[:, 0] - ref) * np.sqrt(vp[0, 0]))
    return tail >= threshold


def q_single_arm_positive_prob(protocol, rate, R, seed, workers=1):
    """P(posterior P(theta > reference) >= threshold) by the Q-approximation."""
    rates = _check_rates(rate)
    law, curvature = _stage_law(rates, [protocol.n])
    prior = beta_to_gaussian_prior([protocol.prior[0]], [protocol.prior[1]])
    t0 = time.perf_counter()
    hits = run_blocks(
        _single_arm_block, R, seed,
        (law, curvature, prior, protocol.reference_rate, protocol.decision_threshold), workers,
    )
    return proportion("positive", np.concatenate(hits), time.perf_counter() - t0)


def _delta_prob(cp, vp):
    """P(theta_1 - theta_0 > 0) for stacked centers under one posterior curvature."""
    a = np.array([-1.0, 1.0])
    var = a @ np.linalg.solve(vp, a)
    return normal_cdf((cp @ a) / np.sqrt(var))


def _two_arm_block(law, curvature, prior, threshold, size, rng):
    c = sample_center(law, rng, size)
    cp, vp = posterior_update_batch(c, curvature, prior)
    return _delta_prob(cp, vp) > threshold


def _two_arm_prior(protocol):
    (a0, b0), (a1, b1) = protocol.priors
    return beta_to_gaussian_prior([a0, a1], [b0, b1])


def q_two_arm_power(protocol, rates, R, seed, workers=1):
    """P(Q-posterior P(delta > 0) > threshold) for a single-stage two-arm trial."""
    rates = _check_rates(rates)
    if protocol.n_stages != 1:
        raise ValueError("use q_multistage_stop_prob for staged protocols")
    law, curvature = _stage_law(rates, [protocol.n0, protocol.n1])
    t0 = time.perf_counter()
    hits = run_blocks(
        _two_arm_block, R, seed, (law, curvature, _two_arm_prior(protocol), protocol.decision_threshold), workers
    )
    return proportion("power", np.concatenate(hits), time.perf_counter() - t0)


def _multistage_block(laws, curvatures, prior, lambdas, threshold, size, rng):
    d = laws[0].mean.size
    h = np.zeros((size, d))
    v = np.zeros((d, d))
    stopped = np.zeros(size, dtype=bool)
    positive = np.zeros(size, dtype=bool)
    S = len(laws)
    for s, (law, vs) in enumerate(zip(laws, curvatures)):
        c = sample_center(law, rng, size)
        h += c @ vs.T
        v = v + vs
        cum = np.linalg.solve(v, h.T).T
        cp, vp = posterior_update_batch(cum, v, prior)
        prob = _delta_prob(cp, vp)
        if s < S - 1:
            stopped |= prob < lambdas[s]
        else:
            positive = ~stopped & (prob > threshold)
    return np.stack([stopped, positive])


def q_multistage_stop_prob(protocol, rates, R, seed, workers=1):
    """Early-stopping probability of the staged two-arm futility design.

    Also reports the final-stage positive probability in ``extra``.
    """
    rates = _check_rates(rates)
    pairs = [_stage_law(rates, ns) for ns in protocol.stages]
    laws = [p[0] for p in pairs]
    curvatures = [p[1] for p in pairs]
    t0 = time.perf_counter()
    out = run_blocks(
        _multistage_block, R, seed,
        (laws, curvatures, _two_arm_prior(protocol), protocol.futility, protocol.decision_threshold), workers,
    )
    out = np.concatenate(out, axis=1)
    seconds = time.perf_counter() - t0
    est = proportion("stop_prob", out[0], seconds)
    pos = proportion("positive", out[1], seconds)
    return {"stop_prob": est, "positive": pos}
