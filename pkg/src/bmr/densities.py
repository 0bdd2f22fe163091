"""
Exponential-family densities used as priors and posteriors.

Each density holds only its sufficient statistics and round-trips through
a plain ``dict`` (``to_dict`` / ``density_from_dict``) tagged by
``"family"``; see ``docs/schemas.md`` for the field names.
"""

import numpy as np

from .special import DomainError, inv_spd, is_spd

__all__ = [
    "GaussianDensity",
    "DirichletDensity",
    "BetaDensity",
    "GammaDensity",
    "CategoricalDensity",
    "MultinomialDensity",
    "density_from_dict",
    "SchemaError",
    "FAMILIES",
]


def _vector(x, name):
    arr = np.array(x, dtype=float, ndmin=1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


class GaussianDensity:
    """Multivariate normal given by a mean and either covariance or precision.

    Whichever of ``cov`` / ``precision`` is not supplied is computed on first
    access and cached. Both are treated as read-only.

    Parameters
    ----------
    mean : array_like, shape (n,)
    cov : array_like, shape (n, n), optional
    precision : array_like, shape (n, n), optional
    check : bool
        Verify symmetry and positive-definiteness on construction.

    Notes
    -----
    Passing both ``cov`` and ``precision`` skips the inversion; the caller
    is then responsible for them being mutual inverses.
    """

    family = "gaussian"

    def __init__(self, mean, cov=None, precision=None, check=True):
        self.mean = _vector(mean, "mean")
        n = self.mean.size
        if cov is None and precision is None:
            raise ValueError("give cov or precision")
        self._cov = None if cov is None else self._square(cov, n, check)
        self._precision = None if precision is None else self._square(precision, n, check)

    @staticmethod
    def _square(m, n, check):
        m = np.array(m, dtype=float)
        if m.ndim == 0 or m.shape == (n,):
            m = np.diag(np.broadcast_to(m, (n,)).astype(float))
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match mean length {n}")
        if check and not is_spd(m):
            raise DomainError("covariance/precision must be symmetric positive definite")
        return m

    @classmethod
    def from_precision(cls, mean, precision, check=True):
        return cls(mean, precision=precision, check=check)

    @property
    def dim(self):
        return self.mean.size

    @property
    def cov(self):
        if self._cov is None:
            self._cov = inv_spd(self._precision)
        return self._cov

    @property
    def precision(self):
        if self._precision is None:
            self._precision = inv_spd(self._cov)
        return self._precision

    @property
    def var(self):
        return np.diag(self.cov).copy()

    def credible_interval(self, level=0.9):
        """Marginal equal-tailed credible interval for each coordinate."""
        from scipy.stats import norm

        z = norm.ppf(0.5 + level / 2.0)
        sd = np.sqrt(self.var)
        return self.mean - z * sd, self.mean + z * sd

    def marginal(self, index):
        index = np.asarray(index, dtype=int)
        return GaussianDensity(self.mean[index], cov=self.cov[np.ix_(index, index)],
                               check=False)

    def to_dict(self):
        return {
            "family": self.family,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
        }

    def __repr__(self):
        return f"GaussianDensity(dim={self.dim})"


class DirichletDensity:
    """Dirichlet over the simplex with positive ``concentrations``."""

    family = "dirichlet"

    def __init__(self, concentrations):
        self.concentrations = _vector(concentrations, "concentrations")
        if np.any(self.concentrations <= 0):
            raise DomainError("Dirichlet concentrations must be positive")

    def __len__(self):
        return self.concentrations.size

    @property
    def mean(self):
        return self.concentrations / self.concentrations.sum()

    def to_dict(self):
        return {"family": self.family, "concentrations": self.concentrations.tolist()}

    def __repr__(self):
        return f"DirichletDensity({self.concentrations.tolist()})"


class BetaDensity:
    family = "beta"

    def __init__(self, alpha, beta):
        self.alpha = float(alpha)
        self.beta = float(beta)
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("Beta parameters must be positive")

    def as_dirichlet(self):
        return DirichletDensity([self.alpha, self.beta])

    def to_dict(self):
        return {"family": self.family, "alpha": self.alpha, "beta": self.beta}

    def __repr__(self):
        return f"BetaDensity({self.alpha!r}, {self.beta!r})"


class GammaDensity:
    """Gamma density in shape/rate form, ``beta^alpha theta^(alpha-1) e^(-beta theta) / Gamma(alpha)``."""

    family = "gamma"

    def __init__(self, shape, rate):
        self.shape = float(shape)
        self.rate = float(rate)
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError("Gamma shape and rate must be positive")

    @property
    def mean(self):
        return self.shape / self.rate

    def to_dict(self):
        return {"family": self.family, "shape": self.shape, "rate": self.rate}

    def __repr__(self):
        return f"GammaDensity(shape={self.shape!r}, rate={self.rate!r})"


def _probability_vector(p):
    p = _vector(p, "probs")
    if np.any(p < 0):
        raise DomainError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-10:
        raise DomainError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


class CategoricalDensity:
    family = "categorical"

    def __init__(self, probs):
        self.probs = _probability_vector(probs)

    def __len__(self):
        return self.probs.size

    def to_dict(self):
        return {"family": self.family, "probs": self.probs.tolist()}

    def __repr__(self):
        return f"CategoricalDensity({self.probs.tolist()})"


class MultinomialDensity:
    family = "multinomial"

    def __init__(self, probs, n):
        self.probs = _probability_vector(probs)
        if int(n) != n or n < 1:
            raise DomainError("multinomial count n must be a positive integer")
        self.n = int(n)

    def __len__(self):
        return self.probs.size

    def to_dict(self):
        return {"family": self.family, "probs": self.probs.tolist(), "n": self.n}

    def __repr__(self):
        return f"MultinomialDensity({self.probs.tolist()}, n={self.n})"


FAMILIES = {
    cls.family: cls
    for cls in (GaussianDensity, DirichletDensity, BetaDensity, GammaDensity,
                CategoricalDensity, MultinomialDensity)
}

_REQUIRED = {
    "gaussian": ("mean",),
    "dirichlet": ("concentrations",),
    "beta": ("alpha", "beta"),
    "gamma": ("shape", "rate"),
    "categorical": ("probs",),
    "multinomial": ("probs", "n"),
}


class SchemaError(ValueError):
    """A serialised density is missing a field or has a malformed one."""

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"field {field!r}: {message}")


def _field(d, key, kind):
    try:
        if kind == "vector":
            value = np.array(d[key], dtype=float)
            if value.ndim != 1:
                raise ValueError("expected a list of numbers")
        elif kind == "matrix":
            value = np.array(d[key], dtype=float)
            if value.ndim != 2:
                raise ValueError("expected a list of equal-length lists")
        elif kind == "int":
            value = d[key]
            if isinstance(value, bool) or int(value) != value:
                raise ValueError("expected an integer")
            value = int(value)
        else:
            value = float(d[key])
    except (TypeError, ValueError) as exc:
        raise SchemaError(key, str(exc)) from exc
    if not np.all(np.isfinite(value)):
        raise SchemaError(key, "non-finite value")
    return value


def density_from_dict(d):
    """Rebuild a density from the output of its ``to_dict``.

    Raises
    ------
    SchemaError
        Naming the offending field.
    """
    if not isinstance(d, dict):
        raise SchemaError("<root>", "expected a JSON object")
    family = d.get("family")
    if family not in FAMILIES:
        raise SchemaError("family", f"unknown family {family!r}")
    for key in _REQUIRED[family]:
        if key not in d:
            raise SchemaError(key, "missing")

    if family == "gaussian":
        if ("cov" in d) == ("precision" in d):
            raise SchemaError("cov", "give exactly one of 'cov' or 'precision'")
        key = "cov" if "cov" in d else "precision"
        mean = _field(d, "mean", "vector")
        mat = _field(d, key, "matrix")
        try:
            return GaussianDensity(mean, **{key: mat})
        except ValueError as exc:
            raise SchemaError(key, str(exc)) from exc

    kinds = {"concentrations": "vector", "probs": "vector", "n": "int"}
    values = {key: _field(d, key, kinds.get(key, "scalar")) for key in _REQUIRED[family]}
    try:
        return FAMILIES[family](*values.values())
    except ValueError as exc:
        raise SchemaError(_REQUIRED[family][0], str(exc)) from exc
