"""
Bayesian model reduction kernels.

Given a full prior, the (approximate) posterior obtained under it, and a
reduced prior of the same family, each kernel returns the change in free
energy ``delta_f = F[reduced] - F[full]`` (nats) and the reduced posterior,
without refitting. All kernels compute ``ln E_Q[P_reduced / P_full]`` in
closed form.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np

from .densities import (
    BetaDensity,
    CategoricalDensity,
    DirichletDensity,
    GammaDensity,
    GaussianDensity,
    MultinomialDensity,
)
from .special import DomainError, log_gamma, log_mvbeta

__all__ = [
    "OFF_VARIANCE",
    "REMOVAL_CONCENTRATION",
    "ReductionResult",
    "ImproperPosteriorError",
    "reduce_gaussian",
    "reduce_dirichlet",
    "reduce_beta",
    "reduce_gamma",
    "reduce_categorical",
    "reduce_multinomial",
    "reduce",
]

#: prior variance that switches a Gaussian parameter off
OFF_VARIANCE = float(np.exp(-16.0))
#: Dirichlet concentration standing in for "zero" (B(.) diverges at 0)
REMOVAL_CONCENTRATION = 1e-3


@dataclass(frozen=True)
class ReductionResult:
    delta_f: float
    reduced_posterior: Any


class ImproperPosteriorError(ValueError):
    """The reduced prior implies an improper (non-normalisable) reduced posterior.

    Attributes
    ----------
    index : int or None
        Offending coordinate for the discrete and Gamma families.
    direction : ndarray or None
        Eigenvector of the reduced posterior precision with the most
        negative eigenvalue (Gaussian family).
    eigenvalue : float or None
    """

    def __init__(self, message, index=None, direction=None, eigenvalue=None):
        super().__init__(f"improper reduced posterior: {message}")
        self.index = index
        self.direction = direction
        self.eigenvalue = eigenvalue


# --------------------------------------------------------------------------- #
# Gaussian
# --------------------------------------------------------------------------- #


class GaussianStats:
    """Quantities of the full prior and posterior that every reduction reuses."""

    def __init__(self, full_prior, posterior):
        if full_prior.dim != posterior.dim:
            raise ValueError(
                f"prior dimension {full_prior.dim} != posterior dimension {posterior.dim}"
            )
        self.dim = full_prior.dim
        Pi = full_prior.precision
        P = posterior.precision
        self.Pi = Pi
        self.P = P
        self.eta = full_prior.mean
        self.mu = posterior.mean
        self.Pi_eta = Pi @ full_prior.mean
        self.P_mu = P @ posterior.mean
        self.quad = (
            float(posterior.mean @ self.P_mu) - float(full_prior.mean @ self.Pi_eta)
        )
        self.logdet = _logdet_stack(P[None])[0] - _logdet_stack(Pi[None])[0]


def _logdet_stack(M):
    L = np.linalg.cholesky(M)
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def _improper_gaussian(Pr):
    Pr = 0.5 * (Pr + Pr.T)
    w, V = np.linalg.eigh(Pr)
    return ImproperPosteriorError(
        f"reduced posterior precision has eigenvalue {w[0]:.3g} <= 0 "
        f"(direction {np.array2string(V[:, 0], precision=3)})",
        direction=V[:, 0],
        eigenvalue=float(w[0]),
    )


def reduce_gaussian_stack(stats, Pi_r, eta_r, errors="raise"):
    """Reduce one posterior against a stack of reduced Gaussian priors.

    Parameters
    ----------
    stats : GaussianStats
    Pi_r : ndarray, shape (B, n, n)
        Reduced prior precisions.
    eta_r : ndarray, shape (B, n)
        Reduced prior means.
    errors : {"raise", "record"}
        With "record", entries whose reduced posterior is improper get
        ``delta_f = nan`` and the exceptions are returned by index.

    Returns
    -------
    delta_f : ndarray, shape (B,)
    mu_r : ndarray, shape (B, n)
    Pr : ndarray, shape (B, n, n)
        Reduced posterior precisions.
    failures : dict
        ``{index: ImproperPosteriorError}``.
    """
    Pi_r = np.asarray(Pi_r, dtype=float)
    eta_r = np.asarray(eta_r, dtype=float)
    Pr = stats.P + Pi_r - stats.Pi
    failures = {}
    try:
        Lr = np.linalg.cholesky(Pr)
        good = None
    except np.linalg.LinAlgError:
        good = np.ones(len(Pr), dtype=bool)
        for i in range(len(Pr)):
            try:
                np.linalg.cholesky(Pr[i:i + 1])
            except np.linalg.LinAlgError:
                failures[i] = _improper_gaussian(Pr[i])
                good[i] = False
        if errors == "raise":
            raise failures[min(failures)]
        Lr = np.linalg.cholesky(np.where(good[:, None, None], Pr, np.eye(stats.dim)))

    logdet_Pr = 2.0 * np.sum(np.log(np.diagonal(Lr, axis1=-2, axis2=-1)), axis=-1)
    logdet_Pi_r = _logdet_stack(Pi_r)
    Pi_eta_r = np.matmul(Pi_r, eta_r[..., None])[..., 0]
    rhs = stats.P_mu + Pi_eta_r - stats.Pi_eta
    if good is None:
        mu_r = np.linalg.solve(Pr, rhs[..., None])[..., 0]
    else:
        mu_r = np.linalg.solve(
            np.where(good[:, None, None], Pr, np.eye(stats.dim)), rhs[..., None]
        )[..., 0]
    quad = stats.quad + np.sum(eta_r * Pi_eta_r, axis=-1) - np.sum(mu_r * rhs, axis=-1)
    delta_f = 0.5 * (logdet_Pi_r + stats.logdet - logdet_Pr) - 0.5 * quad
    # an unchanged prior is exactly the full model, not merely within rounding
    same = np.all(Pi_r == stats.Pi, axis=(-2, -1)) & np.all(eta_r == stats.eta, axis=-1)
    delta_f = np.where(same, 0.0, delta_f)
    mu_r[same] = stats.mu
    if good is not None:
        delta_f = np.where(good, delta_f, np.nan)
    return delta_f, mu_r, Pr, failures


def reduce_gaussian(full_prior, posterior, reduced_prior):
    """Reduced free energy and posterior for Gaussian priors and posterior.

    The reduced posterior has precision ``P + Pi_r - Pi`` and mean
    ``C_r (P mu + Pi_r eta_r - Pi eta)``; ``delta_f`` is the log Bayes
    factor of the reduced over the full model.

    Parameters
    ----------
    full_prior, posterior, reduced_prior : GaussianDensity

    Returns
    -------
    ReductionResult

    Raises
    ------
    ImproperPosteriorError
        If the reduced posterior precision is not positive definite; the
        error carries the offending eigen-direction.
    """
    if reduced_prior.dim != full_prior.dim:
        raise ValueError("reduced prior dimension does not match the full prior")
    stats = GaussianStats(full_prior, posterior)
    delta_f, mu_r, Pr, _ = reduce_gaussian_stack(
        stats, reduced_prior.precision[None], reduced_prior.mean[None]
    )
    return ReductionResult(
        float(delta_f[0]),
        GaussianDensity(mu_r[0], precision=0.5 * (Pr[0] + Pr[0].T), check=False),
    )


# --------------------------------------------------------------------------- #
# Dirichlet / Beta
# --------------------------------------------------------------------------- #


def reduce_dirichlet(full_prior, posterior, reduced_prior):
    """Reduce Dirichlet concentration parameters.

    ``a_post_r = a_post + a_r - a`` and
    ``delta_f = ln B(a) - ln B(a_r) + ln B(a_post_r) - ln B(a_post)``.

    Raises
    ------
    ImproperPosteriorError
        If any reduced posterior concentration is not positive; ``index``
        names the first such entry.
    """
    a = full_prior.concentrations
    ap = posterior.concentrations
    ar = reduced_prior.concentrations
    if not (a.size == ap.size == ar.size):
        raise ValueError("Dirichlet densities must have equal length")
    apr = ap + ar - a
    bad = np.flatnonzero(apr <= 0)
    if bad.size:
        i = int(bad[0])
        raise ImproperPosteriorError(
            f"reduced posterior concentration {apr[i]:.6g} <= 0 at index {i}", index=i
        )
    delta_f = log_mvbeta(a) - log_mvbeta(ar) + log_mvbeta(apr) - log_mvbeta(ap)
    return ReductionResult(float(delta_f), DirichletDensity(apr))


def reduce_beta(full_prior, posterior, reduced_prior):
    """Beta reduction as the two-category Dirichlet case."""
    res = reduce_dirichlet(
        full_prior.as_dirichlet(), posterior.as_dirichlet(), reduced_prior.as_dirichlet()
    )
    alpha, beta = res.reduced_posterior.concentrations
    return ReductionResult(res.delta_f, BetaDensity(alpha, beta))


# --------------------------------------------------------------------------- #
# Gamma
# --------------------------------------------------------------------------- #


def reduce_gamma(full_prior, posterior, reduced_prior):
    """Reduce a Gamma (shape/rate) prior.

    Reduced posterior shape ``s_q + s_r - s`` and rate ``r_q + r_r - r``;
    the evidence ratio is the normalising constant of that Gamma kernel.

    Raises
    ------
    ImproperPosteriorError
        ``index`` is 0 for the shape, 1 for the rate.
    """
    a, b = full_prior.shape, full_prior.rate
    aq, bq = posterior.shape, posterior.rate
    ar, br = reduced_prior.shape, reduced_prior.rate
    aqr = aq + ar - a
    bqr = bq + br - b
    if not aqr > 0:
        raise ImproperPosteriorError(f"reduced posterior shape {aqr:.6g} <= 0", index=0)
    if not bqr > 0:
        raise ImproperPosteriorError(f"reduced posterior rate {bqr:.6g} <= 0", index=1)
    delta_f = (
        aq * np.log(bq) + ar * np.log(br) - a * np.log(b) - aqr * np.log(bqr)
        + log_gamma(a) + log_gamma(aqr) - log_gamma(aq) - log_gamma(ar)
    )
    return ReductionResult(float(delta_f), GammaDensity(aqr, bqr))


# --------------------------------------------------------------------------- #
# Categorical / Multinomial
# --------------------------------------------------------------------------- #


def _reduce_probs(d, dq, dr):
    if not (d.size == dq.size == dr.size):
        raise ValueError("probability vectors must have equal length")
    num = dq * dr
    bad = np.flatnonzero((num > 0) & (d == 0))
    if bad.size:
        raise DomainError(
            f"full prior has zero mass at index {int(bad[0])} where the reduced "
            "prior and posterior do not"
        )
    with np.errstate(divide="ignore"):
        logw = np.where(num > 0, np.log(np.where(num > 0, num, 1.0)) - np.log(np.where(d > 0, d, 1.0)),
                        -np.inf)
    if np.all(logw == -np.inf):
        raise ImproperPosteriorError("reduced prior and posterior have disjoint support")
    m = logw.max()
    w = np.exp(logw - m)
    total = w.sum()
    return float(m + np.log(total)), w / total


def reduce_categorical(full_prior, posterior, reduced_prior):
    """Reduce a categorical prior over a discrete parameter.

    The reduced posterior is ``softmax(ln d_r + ln d_q - ln d)`` and
    ``delta_f = ln sum_i d_q[i] d_r[i] / d[i]``.

    Raises
    ------
    DomainError
        If the full prior has zero mass where ``d_q * d_r`` does not.
    """
    delta_f, probs = _reduce_probs(full_prior.probs, posterior.probs, reduced_prior.probs)
    return ReductionResult(delta_f, CategoricalDensity(probs))


def reduce_multinomial(full_prior, posterior, reduced_prior):
    """Multinomial reduction, sharing the categorical update.

    The count ``n`` is carried through unchanged and does not enter
    ``delta_f``, which is therefore the per-trial log Bayes factor. For a
    posterior that is literally ``Mult(n, d_q)`` the evidence ratio over all
    ``n`` trials is ``n * delta_f``.
    """
    if posterior.n != full_prior.n or reduced_prior.n != full_prior.n:
        raise ValueError("multinomial densities must share the count n")
    delta_f, probs = _reduce_probs(full_prior.probs, posterior.probs, reduced_prior.probs)
    return ReductionResult(delta_f, MultinomialDensity(probs, full_prior.n))


_KERNELS = {
    "gaussian": reduce_gaussian,
    "dirichlet": reduce_dirichlet,
    "beta": reduce_beta,
    "gamma": reduce_gamma,
    "categorical": reduce_categorical,
    "multinomial": reduce_multinomial,
}


def reduce(full_prior, posterior, reduced_prior):
    """Dispatch to the kernel matching the densities' family."""
    family = full_prior.family
    if posterior.family != family or reduced_prior.family != family:
        raise ValueError(
            f"mixed families: {family}, {posterior.family}, {reduced_prior.family}"
        )
    return _KERNELS[family](full_prior, posterior, reduced_prior)
