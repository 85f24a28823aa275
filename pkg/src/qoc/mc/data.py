"""Patient-level trial data."""

from dataclasses import dataclass

import numpy as np


def apportion(n, ratio):
    """Integer arm counts summing to ``n`` in proportion to ``ratio``.

    Largest-remainder rounding; ties go to the arm with the larger weight, then
    the higher arm index (so 2:1 treatment-vs-control gives the extra patient
    to treatment).
    """
    ratio = np.asarray(ratio, dtype=float)
    share = n * ratio / ratio.sum()
    base = np.floor(share).astype(int)
    left = n - base.sum()
    if left:
        order = sorted(range(ratio.size), key=lambda k: (share[k] - base[k], ratio[k], k), reverse=True)
        for k in order[:left]:
            base[k] += 1
    return base


@dataclass(frozen=True)
class Dataset:
    """Outcomes, profile indices, arms and stage boundaries of one trial.

    ``profile`` indexes the rows of the scenario's profile table; ``x`` holds
    the covariate values themselves.  ``stages`` are the cumulative patient
    counts at the end of each stage.
    """

    y: np.ndarray
    profile: np.ndarray
    x: np.ndarray
    arm: np.ndarray
    stages: tuple = ()

    @property
    def n(self):
        return self.y.size

    def cell_counts(self, n_profiles, n_arms):
        """(successes, totals), each of shape (n_profiles, n_arms)."""
        idx = self.profile * n_arms + self.arm
        size = n_profiles * n_arms
        tot = np.bincount(idx, minlength=size).reshape(n_profiles, n_arms)
        succ = np.bincount(idx, weights=self.y, minlength=size).reshape(n_profiles, n_arms)
        return succ, tot

    def arm_summary(self, n_arms):
        tot = np.bincount(self.arm, minlength=n_arms)
        succ = np.bincount(self.arm, weights=self.y, minlength=n_arms)
        return succ, tot

    def head(self, m):
        return Dataset(self.y[:m], self.profile[:m], self.x[:m], self.arm[:m], tuple(s for s in self.stages if s <= m))


def concat(parts):
    parts = [p for p in parts if p is not None]
    stages, total = [], 0
    for p in parts:
        total += p.n
        stages.append(total)
    return Dataset(
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.profile for p in parts]),
        np.concatenate([p.x for p in parts]),
        np.concatenate([p.arm for p in parts]),
        tuple(stages),
    )


def simulate_dataset(scenario, n, rng, arm_counts=None, rho=None):
    """One stage of ``n`` patients.

    Arms come either from fixed ``arm_counts`` (block randomization: the exact
    counts, in random order) or from per-profile probabilities ``rho`` of shape
    (P, K).  With neither, arms are balanced blocks.
    """
    k = scenario.n_arms
    probs = scenario.profile_probs
    prof = rng.choice(probs.size, size=n, p=probs) if probs.size > 1 else np.zeros(n, dtype=np.int64)
    if rho is not None:
        rho = np.asarray(rho, dtype=float)
        u = rng.random(n)
        cum = np.cumsum(rho[prof], axis=1)
        arm = np.minimum((u[:, None] >= cum).sum(1), k - 1)
    else:
        counts = apportion(n, np.ones(k)) if arm_counts is None else np.asarray(arm_counts, dtype=int)
        if counts.sum() != n:
            raise ValueError("arm counts must sum to the stage size")
        arm = rng.permutation(np.repeat(np.arange(k), counts))
    q = scenario.outcome_probs()[prof, arm]
    y = (rng.random(n) < q).astype(np.int64)
    return Dataset(y, prof.astype(np.int64), scenario.profiles[prof], arm.astype(np.int64), (n,))
