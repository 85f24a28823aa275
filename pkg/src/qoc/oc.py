from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OCEstimate:
    """An estimated operating characteristic with its Monte Carlo error."""

    name: str
    estimate: float
    se: float
    replicates: int
    seconds: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    def with_seconds(self, seconds):
        return OCEstimate(self.name, self.estimate, self.se, self.replicates, seconds, self.extra)


def proportion(name, indicators, seconds=0.0):
    x = np.asarray(indicators, dtype=float)
    r = x.size
    p = float(x.mean())
    return OCEstimate(name, p, float(np.sqrt(p * (1.0 - p) / r)), r, seconds)


def mean_estimate(name, values, seconds=0.0):
    x = np.asarray(values, dtype=float)
    r = x.size
    se = float(x.std(ddof=1) / np.sqrt(r)) if r > 1 else 0.0
    return OCEstimate(name, float(x.mean()), se, r, seconds)
