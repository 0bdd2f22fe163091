"""
Variational Gaussian mixture with unit spherical likelihood covariance.

Clusters are pruned by reducing the Dirichlet prior over mixing proportions
(a cluster is switched off by shrinking its prior concentration to a small
floor) and merged when their likelihood densities are within a few nats.
"""

from dataclasses import dataclass, field

import numpy as np

from .densities import DirichletDensity, GaussianDensity
from .fit import LOG_2PI
from .reduction import REMOVAL_CONCENTRATION, reduce_dirichlet
from .rng import make_rng
from .special import digamma, log_mvbeta

__all__ = [
    "GMMModel",
    "GMMPosterior",
    "gmm_generate",
    "gmm_vb_fit",
    "gmm_prune",
    "gmm_merge",
    "gmm_structure_learn",
    "random_model",
    "pentagon_centres",
]

PRIOR_VARIANCE = 16.0
SENSITIVITY_FLOORS = (1e-2, 1e-4)


@dataclass
class GMMModel:
    """Mixture prior.

    ``mean_prior_means`` is ``(K, D)``; every cluster mean has prior
    ``N(mean_prior_means[k], prior_variance I)``. ``init_means`` seeds the
    first responsibility update (defaults to the prior means).
    """

    mean_prior_means: np.ndarray
    mixing_prior: DirichletDensity = None
    prior_variance: float = PRIOR_VARIANCE
    init_means: np.ndarray = None

    def __post_init__(self):
        self.mean_prior_means = np.atleast_2d(np.asarray(self.mean_prior_means, dtype=float))
        K = self.mean_prior_means.shape[0]
        if K < 1:
            raise ValueError("need at least one cluster")
        if self.mixing_prior is None:
            self.mixing_prior = DirichletDensity(np.ones(K))
        if len(self.mixing_prior) != K:
            raise ValueError("mixing prior must have one concentration per cluster")
        if self.init_means is None:
            self.init_means = self.mean_prior_means.copy()
        self.init_means = np.atleast_2d(np.asarray(self.init_means, dtype=float))
        if self.prior_variance <= 0:
            raise ValueError("prior variance must be positive")

    @property
    def n_clusters(self):
        return self.mean_prior_means.shape[0]

    @property
    def dim(self):
        return self.mean_prior_means.shape[1]

    @property
    def mean_priors(self):
        D = self.dim
        return [GaussianDensity(m, cov=self.prior_variance * np.eye(D), check=False)
                for m in self.mean_prior_means]

    def subset(self, keep, init_means=None):
        keep = np.asarray(keep, dtype=int)
        return GMMModel(
            self.mean_prior_means[keep],
            DirichletDensity(self.mixing_prior.concentrations[keep]),
            self.prior_variance,
            self.init_means[keep] if init_means is None else init_means,
        )

    def to_dict(self):
        return {
            "type": "gmm_model",
            "mean_prior_means": self.mean_prior_means.tolist(),
            "prior_variance": self.prior_variance,
            "mixing_prior": self.mixing_prior.to_dict(),
        }


@dataclass
class GMMPosterior:
    responsibilities: np.ndarray
    means: np.ndarray
    mean_variances: np.ndarray
    mixing_posterior: DirichletDensity
    free_energy: float
    trajectory: list = field(default_factory=list)

    @property
    def n_clusters(self):
        return self.means.shape[0]

    @property
    def counts(self):
        return self.responsibilities.sum(axis=0)

    @property
    def mean_posteriors(self):
        D = self.means.shape[1]
        return [GaussianDensity(m, cov=v * np.eye(D), check=False)
                for m, v in zip(self.means, self.mean_variances)]

    @property
    def assignments(self):
        return np.argmax(self.responsibilities, axis=1)


def gmm_generate(centres, weights, n, seed):
    """Draw ``n`` points from a unit-covariance mixture.

    Returns
    -------
    data : ndarray, shape (n, D)
    labels : ndarray of int, shape (n,)
    """
    centres = np.atleast_2d(np.asarray(centres, dtype=float))
    w = np.asarray(weights, dtype=float)
    if w.shape != (centres.shape[0],) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
        raise ValueError("weights must be non-negative, one per centre, and sum to 1")
    rng = make_rng(seed, "gmm", "data")
    labels = rng.choice(centres.shape[0], size=n, p=w)
    return centres[labels] + rng.standard_normal((n, centres.shape[1])), labels


def pentagon_centres(radius=5.0):
    """Five centres on a regular pentagon."""
    ang = 2.0 * np.pi * np.arange(5) / 5 + np.pi / 2
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])


def random_model(data, k, seed, prior_variance=PRIOR_VARIANCE):
    """``k`` clusters with prior means uniform in the bounding box of ``data``."""
    lo, hi = data.min(axis=0), data.max(axis=0)
    means = lo + (hi - lo) * make_rng(seed, "gmm", "init").random((k, data.shape[1]))
    return GMMModel(means, DirichletDensity(np.ones(k)), prior_variance)


def _free_energy(X, R, means, variances, a, model):
    """Expected log joint minus KL terms, with ``R`` the responsibilities."""
    N, D = X.shape
    a0 = model.mixing_prior.concentrations
    s0 = model.prior_variance
    elog_pi = digamma(a) - digamma(a.sum())
    sq = np.sum((X[:, None, :] - means[None]) ** 2, axis=2) + D * variances[None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(R > 0, R * np.log(R), 0.0)
    like = float(np.sum(R * (elog_pi[None] - 0.5 * D * LOG_2PI - 0.5 * sq))) - float(ent.sum())
    kl_dir = float(log_mvbeta(a0) - log_mvbeta(a) + np.sum((a - a0) * elog_pi))
    d2 = np.sum((means - model.mean_prior_means) ** 2, axis=1)
    kl_means = 0.5 * np.sum(D * variances / s0 + d2 / s0 - D + D * np.log(s0 / variances))
    return like - kl_dir - float(kl_means)


def _responsibilities(X, means, variances, a):
    D = X.shape[1]
    elog_pi = digamma(a) - digamma(a.sum())
    logits = elog_pi[None] - 0.5 * np.sum((X[:, None, :] - means[None]) ** 2, axis=2) \
        - 0.5 * D * variances[None]
    logits -= logits.max(axis=1, keepdims=True)
    R = np.exp(logits)
    return R / R.sum(axis=1, keepdims=True)


def gmm_vb_fit(data, model, sweeps=32, tol=1e-4):
    """Coordinate-ascent variational Bayes.

    Each sweep updates the responsibilities, then the cluster mean
    posteriors and the Dirichlet posterior. The free energy is recorded
    after every sweep; stops after ``sweeps`` or when it changes by less
    than ``tol``.

    Raises
    ------
    ValueError
        On empty or non-finite data, or a dimension mismatch.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.size == 0:
        raise ValueError("data are empty")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contain non-finite values")
    if X.shape[1] != model.dim:
        raise ValueError(f"data have dimension {X.shape[1]}, model has {model.dim}")
    K = model.n_clusters
    a0 = model.mixing_prior.concentrations
    s0 = model.prior_variance
    means = model.init_means.copy()
    variances = np.full(K, s0)
    a = a0.copy()
    trajectory = []
    R = None
    for _ in range(sweeps):
        R = _responsibilities(X, means, variances, a)
        Nk = R.sum(axis=0)
        variances = 1.0 / (1.0 / s0 + Nk)
        means = variances[:, None] * (model.mean_prior_means / s0 + R.T @ X)
        a = a0 + Nk
        trajectory.append(_free_energy(X, R, means, variances, a, model))
        if len(trajectory) > 1 and abs(trajectory[-1] - trajectory[-2]) < tol:
            break
    return GMMPosterior(R, means, variances, DirichletDensity(a), trajectory[-1], trajectory)


def _removal_delta_f(model, posterior, floor):
    a0 = model.mixing_prior.concentrations
    prior = DirichletDensity(a0)
    post = posterior.mixing_posterior
    out = np.empty(a0.size)
    for k in range(a0.size):
        reduced = a0.copy()
        reduced[k] = floor
        out[k] = reduce_dirichlet(prior, post, DirichletDensity(reduced)).delta_f
    return out


def gmm_prune(posterior, model, floor=REMOVAL_CONCENTRATION):
    """Remove clusters whose Dirichlet reduction increases the evidence.

    Returns
    -------
    pruned : GMMModel
    report : dict
        ``delta_f`` per cluster, ``removed`` indices, ``kept`` indices, and
        ``sensitivity``: the removal sets at alternative floors.
    """
    if model.n_clusters < 2:
        raise ValueError("pruning needs at least two clusters")
    delta_f = _removal_delta_f(model, posterior, floor)
    largest = int(np.argmax(posterior.counts))
    remove = delta_f > 0
    remove[largest] = False
    kept = np.flatnonzero(~remove)
    sensitivity = {}
    for alt in SENSITIVITY_FLOORS:
        alt_df = _removal_delta_f(model, posterior, alt)
        alt_rm = alt_df > 0
        alt_rm[largest] = False
        sensitivity[alt] = np.flatnonzero(alt_rm).tolist()
    report = {
        "delta_f": delta_f,
        "removed": np.flatnonzero(remove).tolist(),
        "kept": kept.tolist(),
        "floor": floor,
        "sensitivity": sensitivity,
    }
    return model.subset(kept, posterior.means[kept]), report


def _components(adjacent):
    """Connected components of a boolean adjacency matrix (transitive closure)."""
    K = adjacent.shape[0]
    label = -np.ones(K, dtype=int)
    c = 0
    for start in range(K):
        if label[start] >= 0:
            continue
        stack = [start]
        label[start] = c
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adjacent[i] & (label < 0)):
                label[j] = c
                stack.append(j)
        c += 1
    return [np.flatnonzero(label == k) for k in range(c)]


def gmm_merge(posterior, model, threshold_nats=3.0):
    """Merge clusters whose unit-covariance likelihoods are within ``threshold_nats``.

    The KL divergence between the likelihoods is ``0.5 |m_i - m_j|^2``.
    Each merged group keeps the prior of its most populated member, takes
    the precision-weighted mean of its members' posterior means as the new
    starting point, and pools their mixing concentrations.

    Returns
    -------
    merged : GMMModel
    report : dict
        Pairwise ``kl`` matrix and the ``groups`` of original indices.
    """
    if model.n_clusters < 2:
        raise ValueError("merging needs at least two clusters")
    m = posterior.means
    kl = 0.5 * np.sum((m[:, None] - m[None]) ** 2, axis=2)
    groups = _components(kl < threshold_nats)
    counts = posterior.counts
    a0 = model.mixing_prior.concentrations
    prec = 1.0 / posterior.mean_variances
    prior_means, init, conc = [], [], []
    for g in groups:
        lead = g[np.argmax(counts[g])]
        prior_means.append(model.mean_prior_means[lead])
        init.append(prec[g] @ m[g] / prec[g].sum())
        conc.append(a0[g].sum())
    merged = GMMModel(np.array(prior_means), DirichletDensity(np.array(conc)),
                      model.prior_variance, np.array(init))
    return merged, {"kl": kl, "groups": [g.tolist() for g in groups]}


def gmm_structure_learn(data, k_init=8, seed=1, sweeps=32, threshold_nats=3.0,
                        floor=REMOVAL_CONCENTRATION, max_rounds=32, model=None):
    """Fit, merge and prune until a round changes nothing.

    Returns
    -------
    posterior : GMMPosterior
        Fit of the final model.
    history : list of dict
        Per round: ``k`` fitted, free energy, merge groups, prune report,
        the fitted cluster means and the free-energy ``trajectories`` of
        every VB fit run in that round.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if k_init < 1:
        raise ValueError("k_init must be at least 1")
    model = model or random_model(X, k_init, seed)
    history = []
    for _ in range(max_rounds):
        post = gmm_vb_fit(X, model, sweeps)
        entry = {"k": model.n_clusters, "free_energy": post.free_energy,
                 "means": post.means.copy(), "assignments": post.assignments,
                 "trajectories": [post.trajectory]}
        history.append(entry)
        if model.n_clusters == 1:
            break
        changed = False
        merged, mrep = gmm_merge(post, model, threshold_nats)
        entry["groups"] = mrep["groups"]
        if merged.n_clusters < model.n_clusters:
            changed = True
            model = merged
            post = gmm_vb_fit(X, model, sweeps)
            entry["trajectories"].append(post.trajectory)
        if model.n_clusters > 1:
            pruned, prep = gmm_prune(post, model, floor)
            entry["prune"] = prep
            if pruned.n_clusters < model.n_clusters:
                changed = True
                model = pruned
        if not changed:
            break
    if post.n_clusters != model.n_clusters:
        post = gmm_vb_fit(X, model, sweeps)
        history[-1]["trajectories"].append(post.trajectory)
    return post, history
