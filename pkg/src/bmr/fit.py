"""Shared pieces of the variational fitters: the fit record and KL terms."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .densities import GaussianDensity
from .special import log_det_spd

__all__ = ["FitResult", "FitError", "kl_gaussian", "LambdaUpdate"]

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class FitResult:
    """Outcome of a variational fit.

    Attributes
    ----------
    posterior : GaussianDensity
        Approximate posterior over the model parameters.
    lambda_posterior : GaussianDensity or None
        Posterior over the log noise variance; ``None`` when it was held fixed.
    free_energy : float
        Final free energy (nats); equals ``trajectory[-1]``.
    trajectory : list of float
        Free energy after every iteration.
    converged : bool
    iterations : int
    diagnostics : dict
    """

    posterior: GaussianDensity
    lambda_posterior: Optional[GaussianDensity]
    free_energy: float
    trajectory: list
    converged: bool
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "type": "fit_result",
            "posterior": self.posterior.to_dict(),
            "lambda_posterior": (
                None if self.lambda_posterior is None else self.lambda_posterior.to_dict()
            ),
            "free_energy": self.free_energy,
            "trajectory": list(map(float, self.trajectory)),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "diagnostics": {k: _plain(v) for k, v in self.diagnostics.items()},
        }

    @classmethod
    def from_dict(cls, d):
        from .densities import density_from_dict

        lam = d.get("lambda_posterior")
        return cls(
            posterior=density_from_dict(d["posterior"]),
            lambda_posterior=None if lam is None else density_from_dict(lam),
            free_energy=float(d["free_energy"]),
            trajectory=[float(v) for v in d.get("trajectory", [d["free_energy"]])],
            converged=bool(d.get("converged", True)),
            iterations=int(d.get("iterations", 0)),
            diagnostics=dict(d.get("diagnostics", {})),
        )


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


class FitError(RuntimeError):
    """A fit diverged; the free-energy trajectory so far is attached."""

    def __init__(self, message, trajectory=()):
        super().__init__(message)
        self.trajectory = list(trajectory)


def kl_gaussian(mean, cov, prior):
    """KL[N(mean, cov) || prior] for a GaussianDensity ``prior``."""
    Pi = prior.precision
    d = mean - prior.mean
    return 0.5 * (
        float(np.sum(Pi * cov)) + float(d @ Pi @ d) - mean.size
        - log_det_spd(Pi) - log_det_spd(cov)
    )


class LambdaUpdate:
    """Gaussian posterior ``N(m, s)`` over a log noise variance.

    For a Gaussian likelihood with ``n`` observations and expected sum of
    squared residuals ``R`` the lambda-dependent part of the free energy is

        f(m, s) = -n m / 2 - R exp(-m + s / 2) / 2 - KL[N(m, s) || N(m0, v0)]

    which is jointly concave in ``(m, s)``; :meth:`step` takes damped Newton
    steps on it, each capped at a trust radius of 4 in ``m`` and halved
    until ``f`` does not decrease.
    """

    def __init__(self, prior):
        if prior.dim != 1:
            raise ValueError("lambda prior must be one-dimensional")
        self.m0 = float(prior.mean[0])
        self.v0 = float(prior.cov[0, 0])
        self.m = self.m0
        self.s = self.v0

    @property
    def expected_precision(self):
        return float(np.exp(-self.m + 0.5 * self.s))

    def kl(self, m=None, s=None):
        m = self.m if m is None else m
        s = self.s if s is None else s
        return 0.5 * ((m - self.m0) ** 2 / self.v0 + s / self.v0 - 1.0 + np.log(self.v0 / s))

    def objective(self, m, s, n, R):
        e = np.exp(-m + 0.5 * s)
        return -0.5 * n * m - 0.5 * R * e - self.kl(m, s)

    def _newton_direction(self, n, Re):
        """Newton direction ``-H^-1 g`` in ``(m, s)``.

        With ``a = R e / 2`` the ``a**2`` terms cancel exactly in both the
        determinant and the adjugate products, so they are expanded by
        hand; a generic solve loses everything to rounding when ``a`` is huge.
        """
        a = 0.5 * Re
        v0, s = self.v0, self.s
        u = 0.5 * n + (self.m - self.m0) / v0
        g0 = a - u
        det = a / (2 * s * s) + a / (4 * v0) + 1.0 / (2 * v0 * s * s)
        n0 = 0.25 * a * u - g0 / (2 * s * s) + a / (4 * v0) - a / (4 * s)
        n1 = 0.5 * a * u + a / v0 - a / (2 * s) + 1.0 / (2 * v0 * v0) - 1.0 / (2 * v0 * s)
        return -np.array([n0, n1]) / det

    def step(self, n, R, max_newton=32, max_halvings=8, tol=1e-10, radius=4.0):
        f = self.objective(self.m, self.s, n, R)
        for _ in range(max_newton):
            e = np.exp(-self.m + 0.5 * self.s)
            d = self._newton_direction(n, R * e)
            if abs(d[0]) > radius:
                d *= radius / abs(d[0])
            t = 1.0
            for _ in range(max_halvings + 1):
                m_new, s_new = self.m + t * d[0], self.s + t * d[1]
                if s_new > 0:
                    f_new = self.objective(m_new, s_new, n, R)
                    if f_new >= f:
                        break
                t *= 0.5
            else:
                return f
            gain = f_new - f
            self.m, self.s, f = m_new, s_new, f_new
            if gain < tol:
                break
        return f

    def density(self):
        return GaussianDensity([self.m], cov=[[self.s]], check=False)
