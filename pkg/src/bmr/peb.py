"""
Two-level parametric empirical Bayes built from reduced free energies.

Each subject is fitted once under its own (full) prior. A second-level
linear model ``theta_i = X_i beta + w_i``, ``w_i ~ N(0, Sigma_2)`` supplies
empirical priors for the parameters of interest, and the evidence of every
subject under such a prior comes from Gaussian model reduction of the stored
subject posterior. Subject data are never revisited.
"""

from dataclasses import dataclass, field

import numpy as np

from .densities import GaussianDensity
from .fit import FitResult, kl_gaussian
from .reduction import OFF_VARIANCE, GaussianStats, reduce_gaussian, reduce_gaussian_stack
from .search import _summarise, as_patterns
from .special import FactorizationError, inv_spd, is_spd

__all__ = [
    "HierarchyLevel",
    "PEBResult",
    "group_design",
    "empirical_prior",
    "reduced_f_under_empirical_prior",
    "peb_fit",
    "peb_bmr",
]


@dataclass
class HierarchyLevel:
    """Second level of the hierarchy.

    Attributes
    ----------
    design : ndarray, shape (S * k, q)
        Stacked per-subject designs; rows ``i*k:(i+1)*k`` are ``X_i``.
    between_cov : ndarray, shape (k, k)
        Between-subject covariance ``Sigma_2`` of the parameters of interest.
    beta_prior : GaussianDensity
        Prior over the ``q`` second-level parameters.
    interest : ndarray of int, shape (k,)
        Indices of the subject parameters that ascend to this level.
    """

    design: np.ndarray
    between_cov: np.ndarray
    beta_prior: GaussianDensity
    interest: np.ndarray
    level: int = 2

    def __post_init__(self):
        self.design = np.atleast_2d(np.asarray(self.design, dtype=float))
        self.between_cov = np.atleast_2d(np.asarray(self.between_cov, dtype=float))
        self.interest = np.atleast_1d(np.asarray(self.interest, dtype=int))
        k = self.interest.size
        if self.between_cov.shape != (k, k) or not is_spd(self.between_cov):
            raise ValueError("between-subject covariance must be SPD with one row per parameter of interest")
        if self.design.shape[0] % k:
            raise ValueError("design rows must be a multiple of the number of parameters of interest")
        if self.design.shape[1] != self.beta_prior.dim:
            raise ValueError("design columns must match the second-level prior dimension")

    @property
    def n_subjects(self):
        return self.design.shape[0] // self.interest.size

    def subject_design(self, i):
        k = self.interest.size
        return self.design[i * k:(i + 1) * k]


@dataclass
class PEBResult:
    beta_posterior: GaussianDensity
    free_energy: float
    per_subject_reduced_f: np.ndarray
    trajectory: list
    converged: bool
    iterations: int
    level2: HierarchyLevel = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "type": "peb_result",
            "beta_posterior": self.beta_posterior.to_dict(),
            "free_energy": self.free_energy,
            "per_subject_reduced_f": np.asarray(self.per_subject_reduced_f).tolist(),
            "trajectory": list(map(float, self.trajectory)),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }


def group_design(group_matrix, n_interest):
    """Kronecker design ``G_i (x) I_k`` for every subject row ``G_i``.

    ``beta`` is then ordered by group-level regressor, each followed by its
    ``n_interest`` parameters.
    """
    G = np.atleast_2d(np.asarray(group_matrix, dtype=float))
    return np.kron(G, np.eye(n_interest))


def empirical_prior(full_prior, interest, mean, between_cov):
    """``full_prior`` with the ``interest`` block replaced by ``N(mean, between_cov)``.

    Cross-covariances between the replaced block and the other parameters
    are set to zero.
    """
    interest = np.asarray(interest, dtype=int)
    m = full_prior.mean.copy()
    S = full_prior.cov.copy()
    m[interest] = mean
    S[interest, :] = 0.0
    S[:, interest] = 0.0
    S[np.ix_(interest, interest)] = between_cov
    return GaussianDensity(m, cov=S, check=False)


def reduced_f_under_empirical_prior(subject_fit, subject_full_prior, empirical_prior):
    """Subject free energy under a new prior, from its stored fit alone."""
    posterior = subject_fit.posterior if isinstance(subject_fit, FitResult) else subject_fit
    dF = reduce_gaussian(subject_full_prior, posterior, empirical_prior).delta_f
    return float(subject_fit.free_energy + dF)


class _Level2Objective:
    """Batched sum of subject reduced free energies as a function of ``beta``."""

    def __init__(self, fits, priors, level2):
        self.level2 = level2
        self.F = np.array([f.free_energy for f in fits], dtype=float)
        self.stats = []
        self.Pi_r = []
        self.base = []
        k = level2.interest.size
        for fit, prior in zip(fits, priors):
            if prior.dim != fit.posterior.dim:
                raise ValueError("subject prior and posterior dimensions differ")
            ep = empirical_prior(prior, level2.interest, np.zeros(k), level2.between_cov)
            self.stats.append(GaussianStats(prior, fit.posterior))
            self.Pi_r.append(ep.precision)
            self.base.append(ep.mean)

    def delta_f(self, betas):
        """``(B, S)`` reduced free-energy changes for a stack of ``beta``."""
        betas = np.atleast_2d(betas)
        lv = self.level2
        out = np.empty((len(betas), len(self.stats)))
        for i, (st, Pi_r, base) in enumerate(zip(self.stats, self.Pi_r, self.base)):
            eta = np.repeat(base[None], len(betas), axis=0)
            eta[:, lv.interest] = betas @ lv.subject_design(i).T
            Pi = np.broadcast_to(Pi_r, (len(betas),) + Pi_r.shape)
            out[:, i] = reduce_gaussian_stack(st, Pi, eta)[0]
        return out

    def log_joint(self, betas):
        p = self.level2.beta_prior
        d = np.atleast_2d(betas) - p.mean
        return self.delta_f(betas).sum(axis=1) - 0.5 * np.einsum("bi,ij,bj->b", d, p.precision, d)


def _derivatives(fun, x, rel_step=1e-3):
    """Value, central-difference gradient and Hessian from one batched call."""
    q = x.size
    h = rel_step * (1.0 + np.abs(x))
    E = np.diag(h)
    pts = [x]
    pts += [x + E[i] for i in range(q)] + [x - E[i] for i in range(q)]
    pairs = [(i, j) for i in range(q) for j in range(i + 1, q)]
    for i, j in pairs:
        pts += [x + E[i] + E[j], x + E[i] - E[j], x - E[i] + E[j], x - E[i] - E[j]]
    v = fun(np.array(pts))
    f0 = v[0]
    fp, fm = v[1:q + 1], v[q + 1:2 * q + 1]
    g = (fp - fm) / (2.0 * h)
    H = np.diag((fp - 2.0 * f0 + fm) / h ** 2)
    cross = v[2 * q + 1:].reshape(-1, 4)
    for (i, j), (pp, pm, mp, mm) in zip(pairs, cross):
        H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4.0 * h[i] * h[j])
    return f0, g, H


def peb_fit(subject_fits, subject_priors, level2, tol=1e-4, max_iter=64, max_halvings=8):
    """Newton ascent on the second-level free energy.

    ``F_2 = sum_i F_i(beta) - KL[Q(beta) || P(beta)]``, where ``F_i(beta)``
    is subject ``i``'s free energy under the empirical prior
    ``N(X_i beta, Sigma_2)`` evaluated at the posterior mean of ``beta``,
    and ``Q(beta)`` is the Laplace approximation at that mean.

    Parameters
    ----------
    subject_fits : list of FitResult
    subject_priors : list of GaussianDensity or GaussianDensity
        Full priors the subjects were fitted under (one shared prior allowed).
    level2 : HierarchyLevel

    Returns
    -------
    PEBResult
    """
    fits = list(subject_fits)
    if len(fits) < 2:
        raise ValueError("PEB needs at least two subjects")
    priors = ([subject_priors] * len(fits) if isinstance(subject_priors, GaussianDensity)
              else list(subject_priors))
    if len(priors) != len(fits):
        raise ValueError("need one prior per subject")
    if level2.n_subjects != len(fits):
        raise ValueError(f"design describes {level2.n_subjects} subjects, got {len(fits)} fits")
    obj = _Level2Objective(fits, priors, level2)
    beta_prior = level2.beta_prior
    F_sum = float(obj.F.sum())

    def evaluate(beta):
        f0, g, H = _derivatives(obj.log_joint, beta)
        try:
            C = inv_spd(-H)
        except FactorizationError:
            return None
        dF = obj.delta_f(beta)[0]
        F2 = F_sum + float(dF.sum()) - kl_gaussian(beta, C, beta_prior)
        return F2, g, H, C, dF

    beta = beta_prior.mean.copy()
    state = evaluate(beta)
    if state is None:
        raise FactorizationError("second-level curvature is not negative definite at the prior mean")
    trajectory = [state[0]]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        F2, g, H, C, _ = state
        step = C @ g
        t = 1.0
        accepted = None
        for _ in range(max_halvings + 1):
            cand = beta + t * step
            new = evaluate(cand)
            if new is not None and new[0] >= F2:
                accepted = new
                break
            t *= 0.5
        if accepted is None:
            converged = bool(0.5 * g @ step < tol)
            break
        beta, state = cand, accepted
        trajectory.append(state[0])
        if state[0] - F2 < tol:
            converged = True
            break

    F2, g, H, C, dF = state
    return PEBResult(
        beta_posterior=GaussianDensity(beta, cov=C, check=False),
        free_energy=F2,
        per_subject_reduced_f=obj.F + dF,
        trajectory=trajectory,
        converged=converged,
        iterations=it,
        level2=level2,
        diagnostics={"gradient": g},
    )


def peb_bmr(result, level2_prior=None, patterns=None, off_variance=OFF_VARIANCE, threads=None):
    """Score switch patterns over the second-level parameters.

    ``patterns`` defaults to all ``2**q`` combinations.
    """
    from .search import enumerate_patterns

    prior = level2_prior or result.level2.beta_prior
    q = prior.dim
    if patterns is None:
        patterns = enumerate_patterns(np.ones(q, dtype=bool), np.arange(q))
    patterns = as_patterns(patterns, q)
    candidates = np.flatnonzero(~patterns.all(axis=0))
    return _summarise(result.beta_posterior, prior, patterns, off_variance, threads, candidates)
