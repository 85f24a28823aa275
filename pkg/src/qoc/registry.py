"""Design ids mapped to their Q-runners, MC baselines and exact oracles.

Every runner returns ``{oc_name: OCEstimate}``.  Scenarios are the objects the
underlying runners take: a response rate for ``single_arm``, a pair of rates
for ``two_arm`` and ``multistage``, an ``ExternalDataScenario`` for
``external_data`` and a logistic ``Scenario`` for ``bar``.
"""

from dataclasses import dataclass
from typing import Callable

from qoc.designs.bar import q_bar_run
from qoc.designs.binary import q_multistage_stop_prob, q_single_arm_positive_prob, q_two_arm_power
from qoc.designs.exact import exact_single_arm_power, exact_two_arm_power
from qoc.designs.external import q_external_data_run
from qoc.mc.bar import mc_bar_run
from qoc.mc.binary import mc_multistage_stop_prob, mc_single_arm_positive_prob, mc_two_arm_power
from qoc.mc.external import mc_external_data_run


@dataclass(frozen=True)
class DesignEntry:
    q: Callable
    mc: Callable
    exact: Callable | None
    max_size: Callable     # protocol -> total sample size (bounds ESS-type OCs)


def _single_q(p, scen, R, seed, workers, cfg=None):
    return {"positive": q_single_arm_positive_prob(p, scen, R, seed, workers)}


def _single_mc(p, scen, R, seed, workers, cfg=None):
    return {"positive": mc_single_arm_positive_prob(p, scen, R, seed, workers)}


def _single_exact(p, scen):
    return {"positive": exact_single_arm_power(p.n, scen, p.reference_rate, p.decision_threshold, p.prior)}


def _two_q(p, scen, R, seed, workers, cfg=None):
    return {"power": q_two_arm_power(p, scen, R, seed, workers)}


def _two_mc(p, scen, R, seed, workers, cfg=None):
    return {"power": mc_two_arm_power(p, scen, R, seed, workers)}


def _two_exact(p, scen):
    return {"power": exact_two_arm_power(p.n0, p.n1, scen, p.decision_threshold, p.priors)}


def _multi_q(p, scen, R, seed, workers, cfg=None):
    return q_multistage_stop_prob(p, scen, R, seed, workers)


def _multi_mc(p, scen, R, seed, workers, cfg=None):
    return mc_multistage_stop_prob(p, scen, R, seed, workers)


def _ext_q(p, scen, R, seed, workers, cfg=None):
    return q_external_data_run(p, scen, R, seed, workers)


def _ext_mc(p, scen, R, seed, workers, cfg=None):
    return mc_external_data_run(p, scen, R, seed, cfg, workers)


def _bar_q(p, scen, R, seed, workers, cfg=None):
    opts = cfg or {}
    return q_bar_run(p, scen, R, seed, workers, opts.get("method", "auto"), opts.get("tol", 5e-4))


def _bar_mc(p, scen, R, seed, workers, cfg=None):
    return mc_bar_run(p, scen, R, seed, cfg, workers)


DESIGNS = {
    "single_arm": DesignEntry(_single_q, _single_mc, _single_exact, lambda p: p.n),
    "two_arm": DesignEntry(_two_q, _two_mc, _two_exact, lambda p: p.n0 + p.n1),
    "multistage": DesignEntry(_multi_q, _multi_mc, None, lambda p: p.n0 + p.n1),
    "external_data": DesignEntry(_ext_q, _ext_mc, None, lambda p: p.n_total),
    "bar": DesignEntry(_bar_q, _bar_mc, None, lambda p: p.n_total),
}


def get_design(design_id):
    try:
        return DESIGNS[design_id]
    except KeyError:
        raise KeyError(f"unknown design id {design_id!r}; known: {sorted(DESIGNS)}") from None


def q_run_design(design_id, protocol, scenario, R, seed, workers=1, options=None):
    """Q-approximation of ``design_id``; ``options`` carries orthant-method overrides."""
    return get_design(design_id).q(protocol, scenario, R, seed, workers, options)


def mc_run_design(design_id, protocol, scenario, R, seed, cfg=None, workers=1):
    """Patient-level simulation of ``design_id``; same OC names as the Q-runner."""
    return get_design(design_id).mc(protocol, scenario, R, seed, workers, cfg)


def oc_range(design_id, protocol, name):
    """Admissible range of an OC: probabilities in [0, 1], sample sizes in [0, n]."""
    if name.startswith(("ess", "sdss")):
        return 0.0, float(get_design(design_id).max_size(protocol))
    return 0.0, 1.0
