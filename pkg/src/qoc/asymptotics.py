"""Population-level MLE asymptotics for binary-outcome analysis models.

Everything here is an exact finite sum over (covariate profile, arm) cells
weighted by ``p_x * rho_k(x)``; no sampling is involved.  Two analysis models
are supported: independent Bernoulli arms (identity link on the arm rates)
and logistic regression on a design row.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from qoc._linalg import inv_spd, symmetrize

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 200


class ConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DesignMap:
    """Maps (profile x, arm k) to a design row.

    ``kind`` is one of

    * ``"arms"``: one-hot arm indicator, length ``n_arms``;
    * ``"main"``: ``[1, x_c..., 1{k=1}, ..., 1{k=K-1}]``;
    * ``"interaction"``: ``[1, x_c..., 1{k=j}..., x_c * 1{k=j}...]`` with the
      arm-by-covariate blocks ordered covariate-major.

    ``covariates`` selects coordinates of the scenario profile ``x+``; dropping
    coordinates here is how a misspecified analysis model omits covariates.
    """

    kind: str
    n_arms: int
    covariates: tuple = ()

    def __post_init__(self):
        if self.kind not in ("arms", "main", "interaction"):
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.n_arms < 1:
            raise ValueError("need at least one arm")
        object.__setattr__(self, "covariates", tuple(int(c) for c in self.covariates))

    @property
    def dim(self):
        c, k = len(self.covariates), self.n_arms
        if self.kind == "arms":
            return k
        if self.kind == "main":
            return 1 + c + (k - 1)
        return 1 + c + (k - 1) + c * (k - 1)

    def rows(self, profiles):
        """Design tensor of shape (P, K, dim)."""
        profiles = np.atleast_2d(np.asarray(profiles, dtype=float))
        n_prof = profiles.shape[0]
        k = self.n_arms
        arm = np.eye(k)
        if self.kind == "arms":
            return np.broadcast_to(arm, (n_prof, k, k)).copy()
        x = profiles[:, list(self.covariates)] if self.covariates else np.zeros((n_prof, 0))
        one = np.ones((n_prof, k, 1))
        xb = np.broadcast_to(x[:, None, :], (n_prof, k, x.shape[1]))
        ind = np.broadcast_to(arm[None, :, 1:], (n_prof, k, k - 1))
        parts = [one, xb, ind]
        if self.kind == "interaction":
            for c in range(x.shape[1]):
                parts.append(xb[:, :, c : c + 1] * ind)
        return np.concatenate(parts, axis=-1)

    def row(self, x, k):
        return self.rows(np.atleast_2d(x))[0, k]


@dataclass(frozen=True)
class Scenario:
    """Simulation truth: outcome law ``q(1 | x+, k)`` and profile distribution.

    ``link`` is ``"identity"`` for probability-scale parameters (Bernoulli arms)
    or ``"logit"`` for log-odds coefficients on ``design`` rows.
    """

    outcome_params: np.ndarray
    profiles: np.ndarray
    profile_probs: np.ndarray
    design: DesignMap
    link: str = "logit"

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.outcome_params, dtype=float))
        profiles = np.atleast_2d(np.asarray(self.profiles, dtype=float))
        probs = np.atleast_1d(np.asarray(self.profile_probs, dtype=float))
        if profiles.shape[0] != probs.size:
            raise ValueError("one probability per profile is required")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("profile probabilities must be nonnegative and sum to 1")
        if omega.size != self.design.dim:
            raise ValueError("outcome_params length does not match the scenario design")
        if self.link not in ("identity", "logit"):
            raise ValueError(f"unknown link {self.link!r}")
        if self.link == "identity" and np.any((omega < 0) | (omega > 1)):
            raise ValueError("probability-scale parameters must lie in [0, 1]")
        for name, val in (("outcome_params", omega), ("profiles", profiles), ("profile_probs", probs)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_arms(self):
        return self.design.n_arms

    def outcome_probs(self):
        """q(1 | x+, k) as a (P, K) array."""
        eta = self.design.rows(self.profiles) @ self.outcome_params
        return eta if self.link == "identity" else expit(eta)


def bernoulli_scenario(rates):
    """Single-profile scenario with per-arm response rates."""
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    return Scenario(rates, np.zeros((1, 0)), np.ones(1), DesignMap("arms", rates.size), link="identity")


@dataclass(frozen=True)
class AnalysisModel:
    kind: str
    design: DesignMap

    def __post_init__(self):
        if self.kind not in ("bernoulli-arms", "logistic"):
            raise ValueError(f"unknown analysis model {self.kind!r}")
        if self.kind == "bernoulli-arms" and self.design.kind != "arms":
            raise ValueError("bernoulli-arms models need an arm-indicator design")

    @property
    def dim(self):
        return self.design.dim


def bernoulli_arms_model(n_arms):
    return AnalysisModel("bernoulli-arms", DesignMap("arms", n_arms))


@dataclass(frozen=True)
class Allocation:
    """Arm-assignment probabilities per profile, shape (P, K), and stage size."""

    rho: np.ndarray
    n: int = 1

    def __post_init__(self):
        rho = np.atleast_2d(np.asarray(self.rho, dtype=float))
        if np.any(rho < 0) or np.any(np.abs(rho.sum(1) - 1.0) > 1e-10):
            raise ValueError("per-profile arm probabilities must form a simplex")
        if self.n < 1:
            raise ValueError("sample size must be at least 1")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def fixed(cls, arm_probs, n_profiles=1, n=1):
        arm_probs = np.asarray(arm_probs, dtype=float)
        return cls(np.tile(arm_probs / arm_probs.sum(), (n_profiles, 1)), n)


@dataclass(frozen=True)
class AsymptoticTriple:
    theta_star: np.ndarray
    J_star: np.ndarray
    V_star: np.ndarray
    I_star: np.ndarray | None = None


def _cells(scenario, model, alloc):
    rows = model.design.rows(scenario.profiles)
    q = scenario.outcome_probs()
    w = scenario.profile_probs[:, None] * alloc.rho
    if w.shape != q.shape:
        raise ValueError("allocation shape does not match the scenario profiles/arms")
    if model.design.n_arms != scenario.n_arms:
        raise ValueError("analysis model and scenario disagree on the number of arms")
    return rows, q, w


def _mean(theta, model, rows):
    eta = rows @ theta
    return eta if model.kind == "bernoulli-arms" else expit(eta)


def _score_parts(theta, model, rows):
    """Per-cell score coefficients for y = 1 and y = 0 (score = coef * row)."""
    mu = _mean(theta, model, rows)
    if model.kind == "logistic":
        return 1.0 - mu, -mu
    return 1.0 / mu, -1.0 / (1.0 - mu)


def _check_rates(theta, model, rows):
    if model.kind == "bernoulli-arms":
        mu = rows @ theta
        if np.any((mu <= 0) | (mu >= 1)):
            raise ConvergenceError("arm rate left the open unit interval")


def population_score(theta, scenario, model, alloc):
    rows, q, w = _cells(scenario, model, alloc)
    a1, a0 = _score_parts(theta, model, rows)
    return np.einsum("pk,pkd->d", w * (q * a1 + (1 - q) * a0), rows)


def population_loglik(theta, scenario, model, alloc):
    rows, q, w = _cells(scenario, model, alloc)
    mu = np.clip(_mean(theta, model, rows), 1e-300, 1 - 1e-16)
    return float(np.sum(w * (q * np.log(mu) + (1 - q) * np.log1p(-mu))))


def expected_curvature(theta, scenario, model, alloc):
    """Minus the expected Hessian of the per-observation log-likelihood."""
    theta = np.asarray(theta, dtype=float)
    rows, q, w = _cells(scenario, model, alloc)
    mu = _mean(theta, model, rows)
    if model.kind == "logistic":
        c = mu * (1 - mu)
    else:
        c = q / mu**2 + (1 - q) / (1 - mu) ** 2
    return symmetrize(np.einsum("pk,pkd,pke->de", w * c, rows, rows))


def expected_score_outer(theta, scenario, model, alloc):
    """E[score score^T] under the scenario outcome law."""
    theta = np.asarray(theta, dtype=float)
    rows, q, w = _cells(scenario, model, alloc)
    a1, a0 = _score_parts(theta, model, rows)
    c = q * a1**2 + (1 - q) * a0**2
    return symmetrize(np.einsum("pk,pkd,pke->de", w * c, rows, rows))


def kl_projection(scenario, model, alloc, start=None):
    """Parameter minimizing expected KL divergence to the scenario law.

    Damped Newton on the population score with step halving.
    """
    rows, q, w = _cells(scenario, model, alloc)
    d = model.dim
    if start is not None:
        theta = np.asarray(start, dtype=float).copy()
    elif model.kind == "bernoulli-arms":
        # the projection is the allocation-weighted arm mean; Newton only polishes it
        mass = np.einsum("pk,pkd->d", w, rows)
        if np.any(mass <= 0):
            raise ConvergenceError("an arm receives no allocation")
        theta = np.einsum("pk,pkd->d", w * q, rows) / mass
        if np.any((theta <= 0) | (theta >= 1)):
            raise ConvergenceError("arm rate on the boundary of the parameter space")
    else:
        theta = np.zeros(d)

    obj = population_loglik(theta, scenario, model, alloc)
    for _ in range(NEWTON_MAX_ITER):
        g = population_score(theta, scenario, model, alloc)
        if np.linalg.norm(g) <= NEWTON_TOL:
            return theta
        h = expected_curvature(theta, scenario, model, alloc)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Newton step (collinear design)") from exc
        if not np.all(np.isfinite(step)):
            raise ConvergenceError("singular Newton step (collinear design)")
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            try:
                _check_rates(cand, model, rows)
                new = population_loglik(cand, scenario, model, alloc)
            except ConvergenceError:
                new = -np.inf
            if new >= obj - 1e-14 * abs(obj):
                break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed")
        theta, obj = cand, new
    g = population_score(theta, scenario, model, alloc)
    if np.linalg.norm(g) <= NEWTON_TOL:
        return theta
    raise ConvergenceError(f"no convergence after {NEWTON_MAX_ITER} iterations (score norm {np.linalg.norm(g):.2e})")


def sandwich_variance(J, I):
    jinv = inv_spd(J)
    return symmetrize(jinv @ np.asarray(I, dtype=float) @ jinv)


def asymptotic_triple(scenario, model, alloc, keep_information=False):
    theta = kl_projection(scenario, model, alloc)
    J = expected_curvature(theta, scenario, model, alloc)
    I = expected_score_outer(theta, scenario, model, alloc)
    return AsymptoticTriple(theta, J, sandwich_variance(J, I), I if keep_information else None)


def stacked_score_covariance(thetas, models, scenario, alloc, center_by_arm=True):
    """Covariance of the concatenated per-observation scores of several models.

    With ``center_by_arm`` the arm-conditional score means are removed, which
    is the right variance when arm counts are fixed by block randomization
    while profiles and outcomes are random.
    """
    blocks = []
    for theta, model in zip(thetas, models):
        rows, q, w = _cells(scenario, model, alloc)
        a1, a0 = _score_parts(np.asarray(theta, dtype=float), model, rows)
        blocks.append((a1[..., None] * rows, a0[..., None] * rows))
    s1 = np.concatenate([b[0] for b in blocks], axis=-1)
    s0 = np.concatenate([b[1] for b in blocks], axis=-1)
    outer = np.einsum("pk,pkd,pke->de", w * q, s1, s1) + np.einsum("pk,pkd,pke->de", w * (1 - q), s0, s0)
    if not center_by_arm:
        return symmetrize(outer)
    mean_cell = q[..., None] * s1 + (1 - q)[..., None] * s0
    arm_mass = w.sum(0)
    arm_sum = np.einsum("pk,pkd->kd", w, mean_cell)
    live = arm_mass > 0
    m = arm_sum[live] / arm_mass[live, None]
    return symmetrize(outer - np.einsum("k,kd,ke->de", arm_mass[live], m, m))


def joint_center_law(scenario, models, alloc):
    """Joint asymptotic law of the MLEs of several models fitted to one dataset.

    Returns ``(thetas, curvatures, cov)`` with ``cov`` the per-observation
    covariance of the stacked centers (divide by n for a sample of size n).
    """
    thetas = [kl_projection(scenario, m, alloc) for m in models]
    curv = [expected_curvature(t, scenario, m, alloc) for t, m in zip(thetas, models)]
    dims = [m.dim for m in models]
    jinv = np.zeros((sum(dims), sum(dims)))
    off = 0
    for j, d in zip(curv, dims):
        jinv[off : off + d, off : off + d] = inv_spd(j)
        off += d
    s = stacked_score_covariance(thetas, models, scenario, alloc)
    return thetas, curv, symmetrize(jinv @ s @ jinv)
