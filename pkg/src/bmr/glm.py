"""
Variational Bayes for the general linear model ``y = X theta + e``,
``e ~ N(0, exp(lambda) I)``.

The approximate posterior factorises as ``Q(theta) Q(lambda)``, both
Gaussian. The theta update is the exact conditional given the expected noise
precision; lambda gets damped Newton steps. Holding lambda fixed turns the
fit into exact conjugate inference, with the free energy equal to the log
evidence.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .densities import GaussianDensity
from .fit import LOG_2PI, FitError, FitResult, LambdaUpdate, kl_gaussian
from .rng import make_rng
from .special import cholesky_spd, inv_spd, log_det_spd

__all__ = [
    "GLMModel",
    "default_lambda_prior",
    "simulate_glm",
    "orthogonal_design",
    "fit_glm",
    "glm_log_evidence_fixed_lambda",
]


def default_lambda_prior():
    return GaussianDensity([0.0], cov=[[1.0]])


@dataclass
class GLMModel:
    """Design matrix plus Gaussian priors on the coefficients and log noise variance."""

    design: np.ndarray
    param_prior: GaussianDensity
    lambda_prior: GaussianDensity = None

    def __post_init__(self):
        self.design = np.atleast_2d(np.asarray(self.design, dtype=float))
        if self.lambda_prior is None:
            self.lambda_prior = default_lambda_prior()
        if self.design.shape[1] != self.param_prior.dim:
            raise ValueError(
                f"design has {self.design.shape[1]} columns but the prior has "
                f"dimension {self.param_prior.dim}"
            )

    @property
    def rank(self):
        return int(np.linalg.matrix_rank(self.design))

    def with_prior(self, prior):
        return GLMModel(self.design, prior, self.lambda_prior)

    def to_dict(self):
        return {
            "type": "glm_model",
            "design": self.design.tolist(),
            "param_prior": self.param_prior.to_dict(),
            "lambda_prior": self.lambda_prior.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        from .densities import density_from_dict

        return cls(
            np.array(d["design"], dtype=float),
            density_from_dict(d["param_prior"]),
            density_from_dict(d["lambda_prior"]) if d.get("lambda_prior") else None,
        )


def orthogonal_design(n_obs, n_regressors, seed):
    """Random regressors with orthonormal columns (unit norm, mutually orthogonal)."""
    if n_regressors > n_obs:
        raise ValueError("cannot orthogonalise more regressors than observations")
    Z = make_rng(seed, "design").standard_normal((n_obs, n_regressors))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def simulate_glm(design, theta, lam, seed):
    """Draw ``y = X theta + e`` with ``e ~ N(0, exp(lam) I)``.

    ``lam = -inf`` gives noiseless data.
    """
    X = np.atleast_2d(np.asarray(design, dtype=float))
    theta = np.asarray(theta, dtype=float)
    if X.shape[1] != theta.size:
        raise ValueError(f"design has {X.shape[1]} columns, theta has {theta.size} entries")
    y = X @ theta
    if lam == -np.inf:
        return y
    sd = np.exp(0.5 * lam)
    return y + sd * make_rng(seed, "glm", "noise").standard_normal(X.shape[0])


def glm_log_evidence_fixed_lambda(y, design, param_prior, lam):
    """Exact ``ln N(y; X eta, X Sigma X^T + exp(lam) I)``."""
    X = np.atleast_2d(np.asarray(design, dtype=float))
    y = np.asarray(y, dtype=float)
    S = X @ param_prior.cov @ X.T + np.exp(lam) * np.eye(X.shape[0])
    L = cholesky_spd(S, jitter=False)
    r = np.linalg.solve(L, y - X @ param_prior.mean)
    return float(-0.5 * (y.size * LOG_2PI + log_det_spd(S) + r @ r))


def _free_energy(R, prior, mu, C, e_prec, m, lam_kl, n):
    accuracy = -0.5 * n * LOG_2PI - 0.5 * n * m - 0.5 * e_prec * R
    return accuracy - kl_gaussian(mu, C, prior) - lam_kl


def fit_glm(y, model, fixed_lambda=None, tol=1e-4, max_iter=64):
    """Fit the GLM by mean-field variational Bayes.

    Parameters
    ----------
    y : array_like, shape (N,)
    model : GLMModel
    fixed_lambda : float, optional
        Hold the log noise variance at this value (exact conjugate fit).
    tol : float
        Stop when the free energy changes by less than this (nats).
    max_iter : int

    Returns
    -------
    FitResult

    Raises
    ------
    FitError
        If the data are not finite or the log noise variance wanders past
        ``|lambda| > 32``.
    """
    y = np.asarray(y, dtype=float)
    X = model.design
    n = y.size
    if X.shape[0] != n:
        raise ValueError(f"y has {n} entries but the design has {X.shape[0]} rows")
    if not np.all(np.isfinite(y)):
        raise FitError("data contain non-finite values")

    prior = model.param_prior
    Pi = prior.precision
    Pi_eta = Pi @ prior.mean
    XtX = X.T @ X
    Xty = X.T @ y
    rank = int(np.linalg.matrix_rank(X))
    diagnostics = {"rank": rank, "rank_deficient": rank < X.shape[1]}
    if rank < X.shape[1]:
        warnings.warn(f"design is rank deficient ({rank} < {X.shape[1]})", RuntimeWarning)

    lam = None if fixed_lambda is not None else LambdaUpdate(model.lambda_prior)
    trajectory = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if lam is None:
            e_prec, m = float(np.exp(-fixed_lambda)), float(fixed_lambda)
        else:
            e_prec, m = lam.expected_precision, lam.m
        P = Pi + e_prec * XtX
        C = inv_spd(P)
        mu = C @ (Pi_eta + e_prec * Xty)

        resid = y - X @ mu
        R = float(resid @ resid) + float(np.sum(XtX * C))
        if lam is None:
            F = _free_energy(R, prior, mu, C, e_prec, m, 0.0, n)
        else:
            lam.step(n, R)
            if abs(lam.m) > 32 or not np.isfinite(lam.m):
                raise FitError(f"log noise variance diverged (lambda = {lam.m:.3g})",
                               trajectory)
            F = _free_energy(R, prior, mu, C, lam.expected_precision, lam.m,
                             lam.kl(), n)
        trajectory.append(float(F))
        if lam is None or (len(trajectory) > 1 and abs(trajectory[-1] - trajectory[-2]) < tol):
            converged = True
            break

    posterior = GaussianDensity(mu, cov=C, precision=P, check=False)
    return FitResult(
        posterior=posterior,
        lambda_posterior=None if lam is None else lam.density(),
        free_energy=trajectory[-1],
        trajectory=trajectory,
        converged=converged,
        iterations=it,
        diagnostics={**diagnostics, "fixed_lambda": fixed_lambda},
    )

