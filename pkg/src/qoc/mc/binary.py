"""Monte Carlo baselines for the single- and two-arm binary designs."""

import time

import numpy as np

from qoc.asymptotics import bernoulli_scenario
from qoc.mc.data import simulate_dataset
from qoc.mc.posterior import beta_posterior_tail, posterior_superiority_mc
from qoc.oc import proportion
from qoc.parallel import map_ordered
from qoc.streams import stream

MC_CHUNK = 64


def run_replicates(fn, R, seed, args=(), workers=1, chunk=MC_CHUNK, axis=-1):
    """Concatenate ``fn(*args, start, stop, seed)`` over replicate chunks.

    Every replicate seeds its own streams from ``(seed, replicate, ...)``, so
    the chunking and worker count do not affect results.
    """
    items = [(*args, start, min(start + chunk, R), seed) for start in range(0, R, chunk)]
    parts = map_ordered(fn, items, workers)
    return np.concatenate(parts, axis=axis)


def _single_arm_chunk(protocol, rate, start, stop, seed):
    scen = bernoulli_scenario([rate])
    out = np.empty(stop - start, dtype=bool)
    for i, r in enumerate(range(start, stop)):
        data = simulate_dataset(scen, protocol.n, stream(seed, r), arm_counts=[protocol.n])
        tail = beta_posterior_tail(data.y.sum(), data.n, protocol.prior, protocol.reference_rate)
        out[i] = tail >= protocol.decision_threshold
    return out


def mc_single_arm_positive_prob(protocol, rate, R, seed, workers=1):
    t0 = time.perf_counter()
    hits = run_replicates(_single_arm_chunk, R, seed, (protocol, float(rate)), workers)
    return proportion("positive", hits, time.perf_counter() - t0)


def _stage_superiority(succ, tot, protocol, rng):
    return posterior_superiority_mc(succ, tot, protocol.M, rng, protocol.priors)


def _two_arm_chunk(protocol, rates, start, stop, seed):
    scen = bernoulli_scenario(rates)
    out = np.empty((2, stop - start), dtype=bool)
    S = protocol.n_stages
    for i, r in enumerate(range(start, stop)):
        succ = np.zeros(2)
        tot = np.zeros(2)
        stopped = False
        prob = 0.0
        for s, counts in enumerate(protocol.stages):
            rng = stream(seed, r, s)
            data = simulate_dataset(scen, sum(counts), rng, arm_counts=counts)
            a, t = data.arm_summary(2)
            succ += a
            tot += t
            prob = _stage_superiority(succ, tot, protocol, rng)
            if s < S - 1 and prob < protocol.futility[s]:
                stopped = True
                break
        out[0, i] = stopped
        out[1, i] = (not stopped) and prob >= protocol.decision_threshold
    return out


def mc_two_arm_power(protocol, rates, R, seed, workers=1):
    if protocol.n_stages != 1:
        raise ValueError("use mc_multistage_stop_prob for staged protocols")
    t0 = time.perf_counter()
    out = run_replicates(_two_arm_chunk, R, seed, (protocol, tuple(rates)), workers)
    return proportion("power", out[1], time.perf_counter() - t0)


def mc_multistage_stop_prob(protocol, rates, R, seed, workers=1):
    t0 = time.perf_counter()
    out = run_replicates(_two_arm_chunk, R, seed, (protocol, tuple(rates)), workers)
    seconds = time.perf_counter() - t0
    return {"stop_prob": proportion("stop_prob", out[0], seconds), "positive": proportion("positive", out[1], seconds)}
