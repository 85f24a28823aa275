"""Fast operating-characteristic approximation for clinical-trial designs.

Two engines are provided for every design: the Q-approximation, which samples
Gaussian surrogate likelihoods from asymptotic theory, and a patient-level
Monte Carlo baseline.  The ``accuracy`` module audits one against the other.
"""

from qoc.oc import OCEstimate

__version__ = "0.1.0"

__all__ = ["OCEstimate", "__version__"]
