"""Shared oracles and random-instance builders for the test suite."""

import numpy as np
from scipy import integrate
from scipy.special import betaln, gammaln
from scipy.stats import gamma as gamma_dist

from bmr.densities import (BetaDensity, CategoricalDensity, DirichletDensity, GammaDensity,
                           GaussianDensity, MultinomialDensity)
from bmr.peb import empirical_prior


def random_spd(rng, n, scale=1.0, floor=0.1):
    B = rng.standard_normal((n, n))
    return scale * (B @ B.T / n + floor * np.eye(n))


def random_gaussian(rng, n, scale=1.0):
    return GaussianDensity(rng.standard_normal(n), cov=random_spd(rng, n, scale))


def linear_gaussian_posterior(prior, X, y, noise_var):
    """Exact posterior of ``y = X theta + e`` with ``e ~ N(0, noise_var I)``."""
    P = prior.precision + X.T @ X / noise_var
    C = np.linalg.inv(P)
    mu = C @ (prior.precision @ prior.mean + X.T @ y / noise_var)
    return GaussianDensity(mu, cov=0.5 * (C + C.T))


def log_marginal_gaussian(prior, X, y, noise_var):
    from scipy.stats import multivariate_normal

    S = X @ prior.cov @ X.T + noise_var * np.eye(X.shape[0])
    return float(multivariate_normal(X @ prior.mean, S).logpdf(y))


def log_evidence_beta_bernoulli(a, b, heads, tails):
    return float(betaln(a + heads, b + tails) - betaln(a, b))


def log_evidence_dirichlet_categorical(alpha, counts):
    alpha = np.asarray(alpha, float)
    counts = np.asarray(counts, float)
    return float(gammaln(alpha.sum()) - gammaln(alpha.sum() + counts.sum())
                 + np.sum(gammaln(alpha + counts) - gammaln(alpha)))


def log_evidence_gamma_exponential(shape, rate, n, total):
    """``ln int prod Exp(y_i | theta) Gamma(theta | shape, rate) dtheta``."""
    return float(shape * np.log(rate) - gammaln(shape)
                 + gammaln(shape + n) - (shape + n) * np.log(rate + total))


def params(d):
    """Comparable parameter vector of any density."""
    if d.family == "gaussian":
        return np.concatenate([d.mean, d.cov.ravel()])
    if d.family == "dirichlet":
        return d.concentrations
    if d.family == "beta":
        return np.array([d.alpha, d.beta])
    if d.family == "gamma":
        return np.array([d.shape, d.rate])
    return d.probs


# --------------------------------------------------------------------------- #
# random admissible instances: (full prior, posterior, R1, R2)
# --------------------------------------------------------------------------- #

def gaussian_case(rng):
    n = int(rng.integers(1, 6))
    prior = random_gaussian(rng, n, scale=2.0)
    X = rng.standard_normal((n + 3, n))
    post = linear_gaussian_posterior(prior, X, rng.standard_normal(n + 3), 0.5)

    def tighter():
        P = prior.precision + random_spd(rng, n, scale=rng.uniform(0.1, 4.0))
        return GaussianDensity(rng.standard_normal(n), precision=P)

    return prior, post, tighter(), tighter()


def dirichlet_case(rng, k=None):
    k = k or int(rng.integers(2, 7))
    a = rng.uniform(0.2, 5.0, k)
    post = a + rng.integers(0, 20, k)
    return (DirichletDensity(a), DirichletDensity(post),
            DirichletDensity(rng.uniform(0.05, 5.0, k)), DirichletDensity(rng.uniform(0.05, 5.0, k)))


def beta_case(rng):
    return tuple(BetaDensity(*d.concentrations) for d in dirichlet_case(rng, 2))


def gamma_case(rng):
    a, b = rng.uniform(0.5, 5.0, 2)
    n = int(rng.integers(1, 30))
    total = rng.gamma(n, 1.0)
    return (GammaDensity(a, b), GammaDensity(a + n, b + total),
            GammaDensity(*rng.uniform(0.5, 5.0, 2)), GammaDensity(*rng.uniform(0.5, 5.0, 2)))


def _probs(rng, k):
    return rng.dirichlet(np.ones(k))


def categorical_case(rng):
    k = int(rng.integers(2, 7))
    return tuple(CategoricalDensity(_probs(rng, k)) for _ in range(4))


def multinomial_case(rng):
    k, n = int(rng.integers(2, 7)), int(rng.integers(1, 20))
    return tuple(MultinomialDensity(_probs(rng, k), n) for _ in range(4))


CASES = {
    "gaussian": gaussian_case,
    "dirichlet": dirichlet_case,
    "beta": beta_case,
    "gamma": gamma_case,
    "categorical": categorical_case,
    "multinomial": multinomial_case,
}


def gamma_quadrature(prior, post, reduced):
    """``ln E_Q[P_r(theta) / P(theta)]`` by adaptive quadrature, in a scaled log frame."""
    def log_integrand(t):
        return (gamma_dist.logpdf(t, post.shape, scale=1 / post.rate)
                + gamma_dist.logpdf(t, reduced.shape, scale=1 / reduced.rate)
                - gamma_dist.logpdf(t, prior.shape, scale=1 / prior.rate))

    shape = post.shape + reduced.shape - prior.shape
    rate = post.rate + reduced.rate - prior.rate
    centre = shape / rate
    sd = np.sqrt(shape) / rate
    ref = log_integrand(centre)
    f = lambda t: np.exp(log_integrand(t) - ref)
    edges = [0.0, max(centre - 8 * sd, 0.0), centre, centre + 8 * sd, np.inf]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            total += integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
    return ref + np.log(total)


def joint_beta_posterior(study):
    """Second-level posterior of the one big linear-Gaussian model, subject parameters integrated out."""
    lv = study.level2
    sigma2 = np.exp(study.lam)
    P = lv.beta_prior.precision.copy()
    b = P @ lv.beta_prior.mean
    for i, (X, y) in enumerate(zip(study.designs, study.data)):
        ep = empirical_prior(study.subject_prior, lv.interest, np.zeros(lv.interest.size),
                             lv.between_cov)
        V = X @ ep.cov @ X.T + sigma2 * np.eye(len(y))
        M = X[:, lv.interest] @ lv.subject_design(i)
        Vi = np.linalg.inv(V)
        P += M.T @ Vi @ M
        b += M.T @ Vi @ y
    C = np.linalg.inv(P)
    return C @ b, C
