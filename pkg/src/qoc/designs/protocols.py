"""Trial protocols and the scenario containers specific to each design."""

from dataclasses import dataclass, field, replace

import numpy as np

from qoc.asymptotics import DesignMap, Scenario
from qoc.mc.data import apportion


@dataclass(frozen=True)
class SingleArmProtocol:
    n: int = 50
    reference_rate: float = 0.4
    decision_threshold: float = 0.9
    prior: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 < self.reference_rate < 1.0:
            raise ValueError("reference rate must lie in (0, 1)")
        if not 0.0 < self.decision_threshold < 1.0:
            raise ValueError("decision threshold must lie in (0, 1)")


@dataclass(frozen=True)
class TwoArmProtocol:
    """Two-arm binary-outcome trial, optionally with futility looks.

    ``stage_sizes`` lists per-stage ``(n0, n1)``; ``futility`` holds the
    thresholds for every stage but the last, where ``decision_threshold``
    applies.
    """

    n0: int = 50
    n1: int = 50
    priors: tuple = ((1.0, 1.0), (1.0, 1.0))
    decision_threshold: float = 0.9
    stage_sizes: tuple | None = None
    futility: tuple | None = None
    M: int = 20000

    def __post_init__(self):
        if self.n0 < 1 or self.n1 < 1:
            raise ValueError("both arms need at least one patient")
        if not 0.0 < self.decision_threshold < 1.0:
            raise ValueError("decision threshold must lie in (0, 1)")
        if self.stage_sizes is not None:
            stages = tuple((int(a), int(b)) for a, b in self.stage_sizes)
            if any(a < 1 or b < 1 for a, b in stages):
                raise ValueError("every stage needs patients in both arms")
            object.__setattr__(self, "stage_sizes", stages)
            object.__setattr__(self, "n0", sum(a for a, _ in stages))
            object.__setattr__(self, "n1", sum(b for _, b in stages))
            lam = tuple(float(v) for v in (self.futility or ()))
            if len(lam) != len(stages) - 1:
                raise ValueError("need one futility threshold per interim look")
            if any(not 0.0 <= v <= 1.0 for v in lam):
                raise ValueError("futility thresholds must lie in [0, 1]")
            object.__setattr__(self, "futility", lam)
        if self.M < 1:
            raise ValueError("M must be positive")

    @property
    def n_stages(self):
        return 1 if self.stage_sizes is None else len(self.stage_sizes)

    @property
    def stages(self):
        return ((self.n0, self.n1),) if self.stage_sizes is None else self.stage_sizes


@dataclass(frozen=True)
class ExternalDataProtocol:
    n_total: int = 182
    ia_schedule: tuple = (36, 72, 108, 144)
    ratio: tuple = (1, 2)
    n_external: int = 500
    prior_var: float = 10.0
    zeta: float = 0.05
    alpha: float = 0.025
    M: int = 1000

    def __post_init__(self):
        ia = tuple(int(v) for v in self.ia_schedule)
        if any(b <= a for a, b in zip(ia, ia[1:])) or (ia and (ia[0] < 1 or ia[-1] >= self.n_total)):
            raise ValueError("interim schedule must be strictly increasing and below the total size")
        object.__setattr__(self, "ia_schedule", ia)
        if not 0.0 <= self.zeta < 1.0:
            raise ValueError("zeta must lie in [0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.n_external < 0 or self.M < 1 or self.prior_var <= 0:
            raise ValueError("invalid external size, M or prior variance")

    @property
    def stage_sizes(self):
        bounds = (0,) + self.ia_schedule + (self.n_total,)
        return tuple(b - a for a, b in zip(bounds, bounds[1:]))

    @property
    def stage_arm_counts(self):
        """Per-stage (control, treatment) counts, shape (S, 2)."""
        return np.array([apportion(n, self.ratio) for n in self.stage_sizes])


@dataclass(frozen=True)
class BarProtocol:
    n_arms: int = 4
    n_total: int = 160
    stage_size: int = 40
    prior_var: float = 10.0
    adaptive: bool = True

    def __post_init__(self):
        if self.n_arms < 2:
            raise ValueError("need at least two arms")
        if self.stage_size < 1 or self.n_total % self.stage_size:
            raise ValueError("total sample size must split into equal stages")

    @property
    def n_stages(self):
        return self.n_total // self.stage_size

    @property
    def design(self):
        return DesignMap("interaction", self.n_arms, (0, 1))


@dataclass(frozen=True)
class ExternalDataScenario:
    """Trial scenario plus the external population's profile distribution.

    The trial scenario uses a ``"main"`` design over ``(x1, x2, x3)`` with two
    arms; the analysis model sees only ``(x1, x2)``.
    """

    trial: Scenario
    external_profile_probs: np.ndarray = field(default=None)

    def __post_init__(self):
        p = self.trial.profile_probs if self.external_profile_probs is None else self.external_profile_probs
        p = np.asarray(p, dtype=float)
        if p.size != self.trial.profile_probs.size:
            raise ValueError("external profile distribution must cover the trial profile table")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("external profile probabilities must sum to 1")
        object.__setattr__(self, "external_profile_probs", p)

    @property
    def external(self):
        """External population as a two-arm scenario (everyone on control)."""
        return replace(self.trial, profile_probs=self.external_profile_probs)

    @property
    def external_reduced(self):
        """External population as a one-arm scenario (arm coefficient dropped)."""
        t = self.trial
        d = DesignMap("main", 1, t.design.covariates)
        return Scenario(t.outcome_params[: d.dim], t.profiles, self.external_profile_probs, d, t.link)


# analysis models of the external-data design
IA_COVARIATES = (0, 1)


def ex3_ia_design():
    return DesignMap("main", 2, IA_COVARIATES)


def ex3_external_design():
    return DesignMap("main", 1, IA_COVARIATES)


def analysis_profile_weights(scenario, covariates=IA_COVARIATES, probs=None):
    """Collapse the profile table onto the analysis covariates.

    Returns ``(analysis_profiles, weights)``.
    """
    probs = scenario.profile_probs if probs is None else probs
    sub = scenario.profiles[:, list(covariates)]
    uniq, inv = np.unique(sub, axis=0, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=probs, minlength=uniq.shape[0])
    return uniq, w
