"""
Special functions and dense linear-algebra helpers.

Everything here is a pure function of its arguments. The gamma-family
functions are vectorised over numpy arrays and accept scalars.
"""

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "DomainError",
    "FactorizationError",
    "log_gamma",
    "digamma",
    "log_mvbeta",
    "cholesky_spd",
    "log_det_spd",
    "inv_spd",
    "softmax",
    "is_spd",
]


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorisation failed.

    Attributes
    ----------
    pivot : int
        Zero-based index of the leading minor that is not positive definite.
    """

    def __init__(self, pivot, message=None):
        self.pivot = int(pivot)
        super().__init__(
            message or f"matrix not positive definite (leading minor {self.pivot})"
        )


EULER_GAMMA = 0.57721566490153286061
_HALF_LOG_2PI = 0.91893853320467274178

# B_{2k} / (2k (2k-1)) for k = 1..8
_STIRLING = np.array([
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
])
# B_{2k} / (2k) for k = 1..8
_DIGAMMA_ASYM = np.array([
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
])
_SHIFT_TO = 10.0
_SERIES_RADIUS = 0.2
_SERIES_TERMS = 26


def _zeta_table(kmax):
    # zeta(k), k = 2..kmax, by direct sum plus Euler-Maclaurin tail
    n = np.arange(1, 41, dtype=float)
    N = 41.0
    out = np.empty(kmax - 1)
    for i, k in enumerate(range(2, kmax + 1)):
        head = np.sum(n ** -k)
        tail = (N ** (1 - k) / (k - 1) + 0.5 * N ** -k + k * N ** (-k - 1) / 12.0
                - k * (k + 1) * (k + 2) * N ** (-k - 3) / 720.0)
        out[i] = head + tail
    return out


_ZETA = _zeta_table(_SERIES_TERMS + 1)
# coefficients of z^k, k = 2..: (-1)^k zeta(k) / k
_LGAMMA1P_COEF = np.array(
    [(-1) ** k * _ZETA[k - 2] / k for k in range(2, _SERIES_TERMS + 2)]
)


def _lgamma1p_series(z):
    """ln Gamma(1 + z) for |z| <= 0.2 by its Taylor series about zero."""
    acc = np.zeros_like(z)
    for c in _LGAMMA1P_COEF[::-1]:
        acc = acc * z + c
    return z * (z * acc - EULER_GAMMA)


def _stirling(x):
    inv = 1.0 / x
    inv2 = inv * inv
    acc = np.zeros_like(x)
    for c in _STIRLING[::-1]:
        acc = acc * inv2 + c
    return (x - 0.5) * np.log(x) - x + _HALF_LOG_2PI + acc * inv


def _as_positive_array(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} requires strictly positive arguments")
    return arr


def log_gamma(x):
    """Natural log of the gamma function for positive real arguments.

    Uses the Stirling series after upward recurrence to ``x >= 10``; near
    the zeros at 1 and 2 a Taylor series in ``x - 1`` keeps the relative
    accuracy.

    Parameters
    ----------
    x : float or array_like
        Strictly positive argument(s).

    Returns
    -------
    float or ndarray
        ``ln Gamma(x)``, same shape as ``x``.

    Raises
    ------
    DomainError
        If any argument is non-positive or NaN.
    """
    x = _as_positive_array(x, "log_gamma")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)

    near1 = np.abs(x - 1.0) <= _SERIES_RADIUS
    near2 = np.abs(x - 2.0) <= _SERIES_RADIUS
    big = x >= _SHIFT_TO
    rest = ~(near1 | near2 | big)

    if near1.any():
        out[near1] = _lgamma1p_series(x[near1] - 1.0)
    if near2.any():
        z = x[near2] - 2.0
        out[near2] = np.log1p(z) + _lgamma1p_series(z)
    if big.any():
        out[big] = _stirling(x[big])
    if rest.any():
        xr = x[rest]
        k = np.ceil(_SHIFT_TO - xr)
        prod = np.ones_like(xr)
        shifted = xr.copy()
        for _ in range(int(k.max())):
            active = shifted < _SHIFT_TO
            prod = np.where(active, prod * shifted, prod)
            shifted = np.where(active, shifted + 1.0, shifted)
        out[rest] = _stirling(shifted) - np.log(prod)
    return out[0] if scalar else out


def digamma(x):
    """Digamma function, the derivative of :func:`log_gamma`.

    Raises
    ------
    DomainError
        If any argument is non-positive or NaN.
    """
    x = _as_positive_array(x, "digamma")
    scalar = x.ndim == 0
    x = np.atleast_1d(x).copy()
    shift = np.zeros_like(x)
    for _ in range(int(np.ceil(_SHIFT_TO - x.min())) if x.min() < _SHIFT_TO else 0):
        active = x < _SHIFT_TO
        shift = np.where(active, shift + 1.0 / np.where(active, x, 1.0), shift)
        x = np.where(active, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    acc = np.zeros_like(x)
    for c in _DIGAMMA_ASYM[::-1]:
        acc = acc * inv2 + c
    out = np.log(x) - 0.5 / x - acc * inv2 - shift
    return out[0] if scalar else out


def log_mvbeta(a, axis=-1):
    """Log of the multivariate beta function ``sum ln Gamma(a_i) - ln Gamma(sum a_i)``.

    Reduces over ``axis`` so a stack of concentration vectors is handled
    in one call.
    """
    a = _as_positive_array(a, "log_mvbeta")
    return np.sum(log_gamma(a), axis=axis) - log_gamma(np.sum(a, axis=axis))


def cholesky_spd(M, jitter=True):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    On failure a diagonal jitter of ``1e-10 * trace / n`` is added and the
    factorisation retried once.

    Raises
    ------
    FactorizationError
        Carries the zero-based index of the failing pivot.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise FactorizationError(0, "matrix has non-finite entries")
    L, info = lapack.dpotrf(M, lower=1, clean=1)
    if info > 0 and jitter:
        n = M.shape[0]
        eps = 1e-10 * abs(np.trace(M)) / n
        L, info = lapack.dpotrf(M + eps * np.eye(n), lower=1, clean=1)
    if info > 0:
        raise FactorizationError(info - 1)
    if info < 0:
        raise ValueError(f"illegal argument to dpotrf ({info})")
    return L


def log_det_spd(M):
    """Log-determinant of an SPD matrix, ``2 * sum(log(diag(chol(M))))``."""
    L = cholesky_spd(M)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def inv_spd(M):
    """Inverse of an SPD matrix through its Cholesky factor (symmetrised)."""
    L = cholesky_spd(M)
    Linv, info = lapack.dtrtri(L, lower=1)
    if info != 0:
        raise FactorizationError(max(info - 1, 0))
    out = Linv.T @ Linv
    return 0.5 * (out + out.T)


def is_spd(M, rtol=1e-10):
    """True when ``M`` is symmetric to ``rtol`` and Cholesky-factorisable."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = max(np.max(np.abs(M)), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T)) > rtol * scale:
        return False
    try:
        cholesky_spd(M, jitter=False)
    except FactorizationError:
        return False
    return True


def softmax(v):
    """Normalised exponential with max-subtraction.

    ``-inf`` entries get probability zero.

    Raises
    ------
    DomainError
        If every entry is ``-inf`` or any entry is NaN or ``+inf``.
    """
    v = np.asarray(v, dtype=float)
    if np.any(np.isnan(v)) or np.any(v == np.inf):
        raise DomainError("softmax needs entries in [-inf, inf)")
    m = np.max(v)
    if m == -np.inf:
        raise DomainError("softmax of an all -inf vector is undefined")
    e = np.exp(v - m)
    return e / np.sum(e)
