"""Accuracy audit: Q-runner vs small-scale MC discrepancies and a random-effects fit.

Discrepancies ``d_b = psi_Q,b - psi_MC,b`` are modeled as
``d_b ~ N(Delta, tau^2 + s_b^2)`` with a flat prior on ``Delta`` and a
half-normal prior on ``tau``.  ``Delta`` is integrated out in closed form and
``tau`` is handled on a refined 1-d grid.
"""

import csv
import json
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

TAU_PRIOR_SCALE = 0.05
GRID_POINTS = 2001


def standard_error(values, R=None):
    """SE of a proportion (``values`` = p-hat, with ``R``) or of a replicate mean.

    Given a scalar estimate and ``R`` this is ``sqrt(p(1-p)/R)``; given an
    array of replicate values it is ``sd / sqrt(R)``.
    """
    if np.ndim(values) == 0:
        if R is None or R <= 0:
            raise ValueError("R must be positive")
        p = float(values)
        return float(np.sqrt(p * (1.0 - p) / R))
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("R must be positive")
    if v.size == 1:
        return 0.0
    return float(v.std(ddof=1) / np.sqrt(v.size))


@dataclass(frozen=True)
class DiscrepancyRecord:
    scenario_id: str
    psi_q: float
    se_q: float
    psi_mc: float
    se_mc: float
    R_q: int = 0
    R_mc: int = 0
    runtime_q_s: float = 0.0
    runtime_mc_s: float = 0.0

    def __post_init__(self):
        if self.se_q < 0 or self.se_mc < 0:
            raise ValueError("standard errors must be non-negative")

    @property
    def delta(self):
        return self.psi_q - self.psi_mc

    @property
    def variance(self):
        return self.se_q**2 + self.se_mc**2


@dataclass(frozen=True)
class RandomEffectsFit:
    delta: float
    tau: float
    delta_interval: tuple
    tau_interval: tuple
    n_records: int
    degenerate: bool = False


def _log_marginal(tau, d, v):
    # log p(d | tau) with Delta integrated against a flat prior
    var = tau[:, None] ** 2 + v[None, :]
    w = 1.0 / var
    sw = w.sum(1)
    mu = (w * d).sum(1) / sw
    quad = (w * (d - mu[:, None]) ** 2).sum(1)
    return -0.5 * (np.log(var).sum(1) + np.log(sw) + quad), mu, 1.0 / sw


def _tau_posterior(tau, d, v, prior_scale):
    logm, mu, var_mu = _log_marginal(tau, d, v)
    logp = logm - 0.5 * (tau / prior_scale) ** 2
    dens = np.exp(logp - logp.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(tau))])
    total = cdf[-1]
    return dens / total, cdf / total, mu, var_mu


def _quantile(grid, cdf, q):
    return float(np.interp(q, cdf, grid))


def fit_random_effects(records, prior_scale=TAU_PRIOR_SCALE, level=0.95, points=GRID_POINTS):
    """Posterior mean of Delta, posterior median of tau, central intervals."""
    if len(records) < 3:
        raise ValueError("need at least 3 discrepancy records")
    d = np.array([r.delta for r in records], dtype=float)
    v = np.array([r.variance for r in records], dtype=float)
    lo_q, hi_q = (1.0 - level) / 2.0, (1.0 + level) / 2.0
    if np.all(v == 0):
        if np.ptp(d) == 0:
            x = float(d[0])
            return RandomEffectsFit(x, 0.0, (x, x), (0.0, 0.0), len(records), degenerate=True)
        v = np.zeros_like(v)
    spread = max(prior_scale, float(np.std(d)), float(np.sqrt(v.max())))
    upper = 8.0 * spread
    start = 0.0 if np.all(v > 0) else upper * 1e-6
    tau = np.linspace(start, upper, points)
    _, cdf, _, _ = _tau_posterior(tau, d, v, prior_scale)
    # refine on the region holding essentially all posterior mass
    top = _quantile(tau, cdf, 1.0 - 1e-6)
    tau = np.linspace(start, max(top, tau[1]), points)
    dens, cdf, mu, var_mu = _tau_posterior(tau, d, v, prior_scale)
    wts = np.concatenate([[0.0], 0.5 * (dens[1:] + dens[:-1]) * np.diff(tau)])
    wts = 0.5 * (wts + np.concatenate([wts[1:], [0.0]]))
    wts /= wts.sum()
    delta = float(wts @ mu)
    sd = np.sqrt(var_mu)

    def mix_cdf(x):
        return float(wts @ ndtr((x - mu) / sd))

    width = 10.0 * float(sd.max()) + float(np.ptp(mu)) + 1e-12
    a, b = float(mu.min()) - width, float(mu.max()) + width
    delta_iv = (brentq(lambda x: mix_cdf(x) - lo_q, a, b), brentq(lambda x: mix_cdf(x) - hi_q, a, b))
    tau_iv = (_quantile(tau, cdf, lo_q), _quantile(tau, cdf, hi_q))
    return RandomEffectsFit(delta, _quantile(tau, cdf, 0.5), delta_iv, tau_iv, len(records))


class BudgetError(ValueError):
    pass


def audit_design(design_id, cases, R_q, seed, R_mc=None, mc_budget=None,
                 oc=None, workers=1, cfg=None, prior_scale=TAU_PRIOR_SCALE):
    """Run both engines over a scenario grid and fit the discrepancy model.

    ``cases`` maps scenario ids to ``(protocol, scenario)`` pairs.  Either ``R_mc`` is
    fixed, or ``mc_budget`` (seconds per scenario; ``"match"`` to use each Q
    run's wall-clock) sets it from a single-replicate pilot.  A budget that
    affords no MC replicate raises ``BudgetError("MC budget insufficient")``.
    """
    from qoc.registry import get_design
    from qoc.streams import MAX_SEED

    if R_mc is None and mc_budget is None:
        raise ValueError("give either R_mc or mc_budget")
    entry = get_design(design_id)
    records = []
    for i, (sid, (protocol, scen)) in enumerate(cases.items()):
        q_seed = (seed + 2 * i) % MAX_SEED
        mc_seed = (seed + 2 * i + 1) % MAX_SEED
        t0 = time.perf_counter()
        q = entry.q(protocol, scen, R_q, q_seed, workers)
        tq = time.perf_counter() - t0
        name = oc or next(iter(q))
        r_mc = R_mc
        if r_mc is None:
            budget = tq if mc_budget == "match" else float(mc_budget)
            t0 = time.perf_counter()
            entry.mc(protocol, scen, 1, mc_seed, 1, cfg)
            per = time.perf_counter() - t0
            r_mc = int(budget // per) if per > 0 else 0
            if r_mc < 1:
                raise BudgetError("MC budget insufficient")
        t0 = time.perf_counter()
        m = entry.mc(protocol, scen, r_mc, mc_seed, workers, cfg)
        tm = time.perf_counter() - t0
        records.append(DiscrepancyRecord(
            str(sid), q[name].estimate, q[name].se, m[name].estimate, m[name].se,
            R_q, r_mc, tq, tm,
        ))
    return fit_random_effects(records, prior_scale), records


AUDIT_COLUMNS = ("scenario_id", "psi_q", "se_q", "psi_mc", "se_mc", "delta", "runtime_q_s", "runtime_mc_s")


def write_audit_csv(path, records, header=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(AUDIT_COLUMNS)
        for r in records:
            w.writerow([r.scenario_id, repr(r.psi_q), repr(r.se_q), repr(r.psi_mc), repr(r.se_mc),
                        repr(r.delta), f"{r.runtime_q_s:.6f}", f"{r.runtime_mc_s:.6f}"])


def audit_summary(fit, records):
    return {
        "delta": fit.delta,
        "tau": fit.tau,
        "delta_interval": list(fit.delta_interval),
        "tau_interval": list(fit.tau_interval),
        "n_records": fit.n_records,
        "degenerate": fit.degenerate,
        "mean_se_q": float(np.mean([r.se_q for r in records])),
        "mean_se_mc": float(np.mean([r.se_mc for r in records])),
    }


def write_audit_json(path, fit, records):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(audit_summary(fit, records), fh, indent=2)


def records_as_dicts(records):
    return [asdict(r) | {"delta": r.delta} for r in records]
