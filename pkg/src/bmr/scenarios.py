"""
Reference studies used by the command line, the demo scripts and the tests.

Each function simulates data from a fixed configuration, fits the full
model once and scores reduced models, returning plain containers.
"""

from dataclasses import dataclass, field

import numpy as np

from .densities import GaussianDensity
from .dynamics import (reference_network, fit_network, network_priors, relabel,
                       simulate_network)
from .glm import GLMModel, fit_glm, orthogonal_design, simulate_glm
from .mixture import gmm_generate, gmm_structure_learn, pentagon_centres
from .peb import HierarchyLevel, group_design, peb_bmr, peb_fit
from .rng import make_rng
from .search import greedy_search, model_posterior, score_patterns

__all__ = [
    "RegressionStudy",
    "regression_study",
    "MixtureStudy",
    "mixture_study",
    "NetworkStudy",
    "network_study",
    "GroupStudy",
    "group_study",
]

# Linear regression: 20 orthonormal regressors, the first 10 active.
N_OBS = 64
N_REGRESSORS = 20
N_ACTIVE = 10
LOG_NOISE_VARIANCE = -8.0


@dataclass
class RegressionStudy:
    design: np.ndarray
    theta: np.ndarray
    y: np.ndarray
    fit: object
    search: object
    prior: GaussianDensity

    @property
    def active(self):
        return self.theta != 0


def regression_study(seed=1, n_obs=N_OBS, n_regressors=N_REGRESSORS, n_active=N_ACTIVE,
                     lam=LOG_NOISE_VARIANCE, width=8):
    """Fit the full regression and run the greedy search over every coefficient."""
    X = orthogonal_design(n_obs, n_regressors, seed)
    theta = np.zeros(n_regressors)
    theta[:n_active] = make_rng(seed, "glm", "theta").standard_normal(n_active)
    y = simulate_glm(X, theta, lam, seed)
    prior = GaussianDensity(np.zeros(n_regressors), cov=np.eye(n_regressors))
    fit = fit_glm(y, GLMModel(X, prior))
    search = greedy_search(fit, prior, np.arange(n_regressors), width=width)
    return RegressionStudy(X, theta, y, fit, search, prior)


@dataclass
class MixtureStudy:
    data: np.ndarray
    labels: np.ndarray
    centres: np.ndarray
    posterior: object
    history: list


def mixture_study(seed=1, n=500, k_init=8, radius=5.0):
    """Five equally weighted clusters; structure learning from ``k_init``."""
    centres = pentagon_centres(radius)
    X, labels = gmm_generate(centres, np.full(5, 0.2), n, seed)
    post, history = gmm_structure_learn(X, k_init, seed)
    return MixtureStudy(X, labels, centres, post, history)


@dataclass
class NetworkStudy:
    spec: object
    data: object
    fit: object
    prior: GaussianDensity
    hypotheses: dict = field(default_factory=dict)
    search: object = None

    @property
    def true_adjacency(self):
        return self.spec.a_matrix != 0

    def recovered_adjacency(self):
        n = self.spec.n_nodes
        return self.search.best_pattern[:n * n].reshape(n, n, order="F")

    def discrepancies(self):
        return int(np.sum(self.recovered_adjacency() != self.true_adjacency))


def _structure_pattern(adjacency, n_params):
    n = adjacency.shape[0]
    on = np.ones(n_params, dtype=bool)
    on[:n * n] = (np.asarray(adjacency, dtype=bool) | np.eye(n, dtype=bool)).ravel(order="F")
    return on


def network_study(seed=1, mode="both", **network_kw):
    """Fit the full network, then compare hypotheses and/or search.

    ``mode`` is ``"compare"`` (full, true and relabelled structures),
    ``"search"`` (greedy search over every off-diagonal coupling) or ``"both"``.
    """
    spec = reference_network(seed, **network_kw)
    data = simulate_network(spec, seed)
    prior = network_priors(spec.n_nodes, spec.n_inputs)
    fit = fit_network(data, spec.inputs, prior)
    study = NetworkStudy(spec, data, fit, prior)
    n = spec.n_nodes
    if mode in ("compare", "both"):
        truth = spec.a_matrix != 0
        names = ["full", "true", "relabelled"]
        pats = np.array([
            np.ones(prior.dim, dtype=bool),
            _structure_pattern(truth, prior.dim),
            _structure_pattern(relabel(truth), prior.dim),
        ])
        dF = score_patterns(fit, prior, pats)
        study.hypotheses = {"names": names, "patterns": pats, "delta_f": dF,
                            "probs": model_posterior(dF)}
    if mode in ("search", "both"):
        off_diag = [i for i in range(n * n) if i % (n + 1) != 0]
        study.search = greedy_search(fit, prior, off_diag)
    return study


@dataclass
class GroupStudy:
    subject_fits: list
    subject_prior: GaussianDensity
    designs: list
    data: list
    lam: float
    level2: HierarchyLevel
    beta_true: np.ndarray
    peb: object
    search: object


def group_study(seed=1, n_subjects=16, n_obs=32, n_params=3, interest=(0, 1),
                beta=(1.0, 0.5, 0.4, 0.0), lam=np.log(0.25), prior_variance=1.0):
    """Two groups, one true group difference, one null.

    Subjects are linear regressions with known noise so their fits are
    exact. ``beta`` is ordered (mean of each parameter of interest, then the
    group difference of each); groups are coded +1/-1.
    """
    interest = np.asarray(interest)
    k = interest.size
    rng = make_rng(seed, "peb", "subjects")
    groups = np.repeat([1.0, -1.0], n_subjects // 2)
    G = np.column_stack([np.ones(n_subjects), groups])
    Xd = group_design(G, k)
    between = np.eye(k) * prior_variance / 16.0
    beta = np.asarray(beta, dtype=float)
    prior = GaussianDensity(np.zeros(n_params), cov=prior_variance * np.eye(n_params))
    level2 = HierarchyLevel(Xd, between, GaussianDensity(np.zeros(Xd.shape[1]),
                                                          cov=np.eye(Xd.shape[1])), interest)
    fits, designs, ys = [], [], []
    L = np.linalg.cholesky(between)
    for i in range(n_subjects):
        theta = rng.standard_normal(n_params) * np.sqrt(prior_variance)
        theta[interest] = Xd[i * k:(i + 1) * k] @ beta + L @ rng.standard_normal(k)
        X = rng.standard_normal((n_obs, n_params))
        y = X @ theta + np.exp(0.5 * lam) * rng.standard_normal(n_obs)
        fits.append(fit_glm(y, GLMModel(X, prior), fixed_lambda=lam))
        designs.append(X)
        ys.append(y)
    result = peb_fit(fits, prior, level2)
    search = peb_bmr(result)
    return GroupStudy(fits, prior, designs, ys, lam, level2, beta, result, search)
