"""
Linear network dynamics ``dz/dt = A z + C u(t)`` observed as ``y = z + e``.

Inputs are piecewise constant on the sampling grid, so each step is
integrated exactly with the matrix exponential of the augmented generator
``[[A, C], [0, 0]]``. Fitting is variational Laplace with Gauss-Newton
steps on the free energy and a finite-difference Jacobian.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy.linalg import expm

from .densities import GaussianDensity
from .fit import LOG_2PI, FitError, FitResult, LambdaUpdate, kl_gaussian
from .rng import make_rng
from .special import FactorizationError, inv_spd

__all__ = [
    "NetworkSpec",
    "TimeSeries",
    "event_inputs",
    "reference_network",
    "relabel",
    "network_priors",
    "pack",
    "unpack",
    "integrate",
    "integrate_batch",
    "simulate_network",
    "jacobian_fd",
    "fit_network",
    "snr_db",
]


@dataclass
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] != self.times.size:
            raise ValueError("values must have one row per time point")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def n_nodes(self):
        return self.values.shape[1]


@dataclass
class NetworkSpec:
    """Network model and observation settings.

    ``inputs`` holds one row per sampling interval: row ``k`` is the input
    on ``[k dt, (k + 1) dt)``. States are reported at ``t_k = k dt``.
    """

    a_matrix: np.ndarray
    c_matrix: np.ndarray
    inputs: np.ndarray
    dt: float
    obs_precision: float = np.inf

    def __post_init__(self):
        self.a_matrix = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        self.c_matrix = np.atleast_2d(np.asarray(self.c_matrix, dtype=float))
        u = np.asarray(self.inputs, dtype=float)
        self.inputs = u[:, None] if u.ndim == 1 else u
        n = self.a_matrix.shape[0]
        if self.a_matrix.shape != (n, n):
            raise ValueError("A must be square")
        if self.c_matrix.shape[0] != n or self.c_matrix.shape[1] != self.inputs.shape[1]:
            raise ValueError(
                f"C has shape {self.c_matrix.shape}; expected ({n}, {self.inputs.shape[1]})"
            )
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def n_nodes(self):
        return self.a_matrix.shape[0]

    @property
    def n_inputs(self):
        return self.c_matrix.shape[1]

    @property
    def duration(self):
        return self.inputs.shape[0] * self.dt

    @property
    def times(self):
        return np.arange(self.inputs.shape[0]) * self.dt

    @property
    def stable(self):
        return bool(np.max(np.linalg.eigvals(self.a_matrix).real) < 0)

    @property
    def theta(self):
        return pack(self.a_matrix, self.c_matrix)

    def to_dict(self):
        return {
            "type": "network_spec",
            "a_matrix": self.a_matrix.tolist(),
            "c_matrix": self.c_matrix.tolist(),
            "inputs": self.inputs.tolist(),
            "dt": self.dt,
            "obs_precision": None if np.isinf(self.obs_precision) else self.obs_precision,
            "obs_fn": "identity",
        }

    @classmethod
    def from_dict(cls, d):
        prec = d.get("obs_precision")
        return cls(d["a_matrix"], d["c_matrix"], d["inputs"], float(d["dt"]),
                   np.inf if prec is None else float(prec))


def pack(A, C):
    """Parameter vector: columns of A (outgoing connections per node), then columns of C."""
    return np.concatenate([np.asarray(A, float).ravel(order="F"),
                           np.asarray(C, float).ravel(order="F")])


def unpack(theta, n_nodes, n_inputs):
    """Inverse of :func:`pack`; accepts a stack of vectors on the last axis."""
    theta = np.asarray(theta, dtype=float)
    k = n_nodes * n_nodes
    lead = theta.shape[:-1]
    A = np.swapaxes(theta[..., :k].reshape(lead + (n_nodes, n_nodes)), -1, -2)
    C = np.swapaxes(theta[..., k:].reshape(lead + (n_inputs, n_nodes)), -1, -2)
    return A, C


def _discretise(A, C, dt):
    """Per-step transition ``Phi`` and input gain ``Gamma`` for stacks of (A, C)."""
    n, r = A.shape[-1], C.shape[-1]
    M = np.zeros(A.shape[:-2] + (n + r, n + r))
    M[..., :n, :n] = A * dt
    M[..., :n, n:] = C * dt
    E = expm(M)
    return E[..., :n, :n], E[..., :n, n:]


def integrate_batch(A, C, inputs, dt, z0=None):
    """Noiseless states for a stack of systems.

    Parameters
    ----------
    A : ndarray, shape (B, n, n)
    C : ndarray, shape (B, n, r)
    inputs : ndarray, shape (T, r)
    dt : float
    z0 : ndarray, shape (n,) or (B, n), optional

    Returns
    -------
    ndarray, shape (B, T, n)
    """
    Phi, Gam = _discretise(A, C, dt)
    B, n = A.shape[0], A.shape[-1]
    T = inputs.shape[0]
    drive = np.einsum("bnr,tr->btn", Gam, inputs)
    z = np.zeros((B, n)) if z0 is None else np.broadcast_to(np.asarray(z0, float), (B, n)).copy()
    out = np.empty((B, T, n))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(T):
            out[:, k] = z
            z = np.matmul(Phi, z[..., None])[..., 0] + drive[:, k]
    return out


def integrate(spec, z0=None):
    """Integrate the network exactly for piecewise-constant inputs.

    Unstable systems are integrated anyway; ``meta["unstable"]`` flags them.
    """
    if not spec.stable:
        warnings.warn("A has an eigenvalue with non-negative real part", RuntimeWarning)
    z = integrate_batch(spec.a_matrix[None], spec.c_matrix[None], spec.inputs, spec.dt, z0)[0]
    return TimeSeries(spec.times, z, {"unstable": not spec.stable})


def snr_db(signal, noise):
    """``10 log10(sum signal^2 / sum noise^2)``."""
    return float(10.0 * np.log10(np.sum(np.square(signal)) / np.sum(np.square(noise))))


def simulate_network(spec, seed, z0=None):
    """Integrate and add i.i.d. Gaussian noise of precision ``spec.obs_precision``.

    ``meta`` carries ``snr_db`` and the noiseless ``clean`` states.

    Raises
    ------
    ValueError
        If the spec is unstable.
    """
    if not spec.stable:
        raise ValueError("refusing to simulate an unstable network")
    clean = integrate(spec, z0).values
    if np.isinf(spec.obs_precision):
        noise = np.zeros_like(clean)
        snr = np.inf
    else:
        noise = make_rng(seed, "network", "noise").standard_normal(clean.shape)
        noise /= np.sqrt(spec.obs_precision)
        snr = snr_db(clean, noise)
    return TimeSeries(spec.times, clean + noise, {"snr_db": snr, "clean": clean})


def event_inputs(seed, n_events=20, event_duration=1.0, duration=256.0, dt=0.5):
    """Unit boxcar events with jittered onsets, one per equal-width slot.

    Onsets are drawn uniformly within each slot (leaving room for the event)
    and snapped to the ``dt`` grid.
    """
    T = int(round(duration / dt))
    width = int(round(event_duration / dt))
    slot = T // n_events
    if slot < width:
        raise ValueError("events do not fit in the run")
    rng = make_rng(seed, "network", "onsets")
    u = np.zeros((T, 1))
    for i in range(n_events):
        onset = i * slot + int(rng.integers(0, slot - width + 1))
        u[onset:onset + width, 0] = 1.0
    return u


REFERENCE_EDGES = ((0, 1), (0, 4), (0, 6), (1, 2), (1, 4), (1, 5), (2, 3), (2, 4), (2, 6),
              (3, 4), (6, 7))


def reference_network(seed=1, forward=0.5, backward=-1.0, self_rate=-0.25, drive=1.0,
                 obs_precision=400.0, dt=0.05, duration=256.0, n_events=20,
                 event_duration=1.0, edges=REFERENCE_EDGES):
    """Eight-node reference network driving node 1 with a jittered event train.

    Each edge ``j -> i`` in ``edges`` (zero-based) has a forward coupling
    ``A[i, j] = forward`` and a reciprocal ``A[j, i] = backward``.
    """
    n = 8
    A = np.diag(np.full(n, self_rate))
    for j, i in edges:
        A[i, j] = forward
        A[j, i] = backward
    C = np.zeros((n, 1))
    C[0, 0] = drive
    u = event_inputs(seed, n_events, event_duration, duration, dt)
    return NetworkSpec(A, C, u, dt, obs_precision)


def relabel(adjacency, shift=1):
    """Same graph with node ``i`` renamed ``i + shift`` (mod n)."""
    adjacency = np.asarray(adjacency)
    n = adjacency.shape[0]
    perm = (np.arange(n) + shift) % n
    out = np.zeros_like(adjacency)
    out[np.ix_(perm, perm)] = adjacency
    return out


def network_priors(n_nodes, n_inputs, self_mean=-0.5, self_var=1.0 / 64,
                   coupling_var=1.0 / 16, input_var=1.0, off=()):
    """Diagonal Gaussian prior over ``pack(A, C)``.

    ``off`` lists parameter indices given the shrinkage variance instead.
    """
    from .reduction import OFF_VARIANCE

    A_mean = np.diag(np.full(n_nodes, self_mean))
    A_var = np.full((n_nodes, n_nodes), coupling_var)
    np.fill_diagonal(A_var, self_var)
    mean = pack(A_mean, np.zeros((n_nodes, n_inputs)))
    var = pack(A_var, np.full((n_nodes, n_inputs), input_var))
    var[list(off)] = OFF_VARIANCE
    mean[list(off)] = 0.0
    return GaussianDensity(mean, cov=np.diag(var))


def jacobian_fd(predict, theta, batched=False, rel_step=1e-4):
    """Central-difference Jacobian of ``predict`` at ``theta``.

    Step for coordinate ``i`` is ``rel_step * (1 + |theta_i|)``. With
    ``batched=True``, ``predict`` maps a ``(B, p)`` stack to ``(B, m)``
    and all ``2 p`` perturbations are evaluated in one call.

    Raises
    ------
    FloatingPointError
        If a perturbed prediction is not finite.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    h = rel_step * (1.0 + np.abs(theta))
    pert = np.concatenate([theta + np.diag(h), theta - np.diag(h)])
    if batched:
        out = np.asarray(predict(pert), dtype=float)
    else:
        out = np.stack([np.asarray(predict(t), dtype=float).ravel() for t in pert])
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite prediction in finite-difference Jacobian")
    return ((out[:p] - out[p:]) / (2.0 * h)[:, None]).T


class _Network:
    """Prediction and Jacobian for a fixed input train and grid."""

    def __init__(self, n_nodes, inputs, dt, z0=None):
        self.n = n_nodes
        self.inputs = np.asarray(inputs, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        self.r = self.inputs.shape[1]
        self.dt = dt
        self.z0 = z0

    def predict(self, thetas):
        thetas = np.atleast_2d(thetas)
        A, C = unpack(thetas, self.n, self.r)
        z = integrate_batch(A, C, self.inputs, self.dt, self.z0)
        return z.reshape(len(thetas), -1)

    def evaluate(self, theta):
        h = self.predict(theta[None])[0]
        if not np.all(np.isfinite(h)):
            return None, None
        try:
            J = jacobian_fd(self.predict, theta, batched=True)
        except FloatingPointError:
            return None, None
        return h, J


def _laplace_terms(y, h, J, prior, mu, lam):
    """Free energy with the posterior covariance at its optimum for this Jacobian."""
    e = lam.expected_precision
    JtJ = J.T @ J
    P = e * JtJ + prior.precision
    C = inv_spd(P)
    r = y - h
    R = float(r @ r) + float(np.sum(JtJ * C))
    n = y.size
    F = (-0.5 * n * LOG_2PI - 0.5 * n * lam.m - 0.5 * e * R
         - kl_gaussian(mu, C, prior) - lam.kl())
    return F, P, C, R


def _safe_terms(y, h, J, prior, mu, lam):
    if h is None:
        return None
    try:
        with np.errstate(over="raise", invalid="raise"):
            terms = _laplace_terms(y, h, J, prior, mu, lam)
    except (FactorizationError, FloatingPointError, np.linalg.LinAlgError):
        return None
    return terms if np.isfinite(terms[0]) else None


def _free_energy_gradient(net, data, priors, mu, lam, rel_step=1e-5):
    """Central-difference gradient of the free energy with respect to ``mu``."""
    g = np.empty(mu.size)
    for i in range(mu.size):
        h = rel_step * (1.0 + abs(mu[i]))
        vals = []
        for sign in (1.0, -1.0):
            x = mu.copy()
            x[i] += sign * h
            terms = _safe_terms(data, *net.evaluate(x), priors, x, lam)
            if terms is None:
                return None
            vals.append(terms[0])
        g[i] = (vals[0] - vals[1]) / (2.0 * h)
    return g


def fit_network(y, inputs, priors, lambda_prior=None, z0=None, tol=1e-4, max_iter=64,
                max_halvings=8, refine="auto", grad_tol=1e-3, max_refine=16):
    """Variational Laplace (Gauss-Newton) fit of ``A`` and ``C``.

    Parameters
    ----------
    y : TimeSeries
        Observations on the integration grid.
    inputs : ndarray, shape (T, r)
        Piecewise-constant inputs, one row per sample.
    priors : GaussianDensity
        Prior over ``pack(A, C)``.
    lambda_prior : GaussianDensity, optional
        Prior on the log noise variance; ``N(0, 1)`` by default.
    refine : bool or "auto"
        After Gauss-Newton stalls, continue ascending along the exact
        free-energy gradient (finite differences, ``2p`` Jacobians per
        step). The Gauss-Newton direction ignores how the posterior
        log-determinant moves with the mean, so it stops short of the
        stationary point. ``"auto"`` refines when ``p <= 24``.
    grad_tol : float
        Refinement stops once the gradient norm falls below this.

    Returns
    -------
    FitResult
        ``diagnostics`` holds the final prediction, the Jacobian, the
        reason the loop stopped and, after refinement, the gradient norm.
    """
    from .glm import default_lambda_prior

    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    n_nodes = y.n_nodes
    if inputs.shape[0] != y.times.size:
        raise ValueError("need one input row per observation")
    if priors.dim != n_nodes * n_nodes + n_nodes * inputs.shape[1]:
        raise ValueError("prior dimension does not match the network size")
    if not np.all(np.isfinite(y.values)):
        raise FitError("observations contain non-finite values")
    net = _Network(n_nodes, inputs, y.dt, z0)
    data = y.values.ravel()
    lam = LambdaUpdate(lambda_prior or default_lambda_prior())

    mu = priors.mean.copy()
    h, J = net.evaluate(mu)
    if h is None:
        raise FitError("prediction at the prior mean is not finite")
    F, P, C, R = _laplace_terms(data, h, J, priors, mu, lam)
    trajectory = [F]
    Pi, eta = priors.precision, priors.mean
    damping = 0.0
    converged = False
    reason = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        F_start = F
        lam.step(data.size, R)
        if abs(lam.m) > 32 or not np.isfinite(lam.m):
            raise FitError(f"log noise variance diverged (lambda = {lam.m:.3g})", trajectory)
        F, P, C, R = _laplace_terms(data, h, J, priors, mu, lam)

        e = lam.expected_precision
        g = e * (J.T @ (data - h)) - Pi @ (mu - eta)
        H = e * (J.T @ J) + Pi
        step = np.linalg.solve(H + damping * np.diag(np.diag(H)), g)
        moved = False
        t = 1.0
        for k in range(max_halvings + 1):
            cand = mu + t * step
            h_c, J_c = net.evaluate(cand)
            terms = _safe_terms(data, h_c, J_c, priors, cand, lam)
            if terms is not None and terms[0] >= F:
                moved = True
                break
            t *= 0.5
        if moved:
            damping = 0.5 * damping if k == 0 else max(4.0 * damping, 1e-3)
            mu, h, J = cand, h_c, J_c
            F, P, C, R = terms
        else:
            damping = max(4.0 * damping, 1e-3)
        trajectory.append(F)
        if F - F_start < tol:
            if moved:
                converged, reason = True, "tolerance"
            else:
                reason = "no_improvement"
                # a stalled step at a stationary point is convergence, not failure
                converged = bool(0.5 * g @ np.linalg.solve(H, g) < tol)
            break

    diagnostics = {"stop": reason, "prediction": h, "jacobian": J}
    if refine == "auto":
        refine = priors.dim <= 24
    if refine:
        for _ in range(max_refine):
            lam.step(data.size, R)
            F, P, C, R = _laplace_terms(data, h, J, priors, mu, lam)
            gF = _free_energy_gradient(net, data, priors, mu, lam)
            if gF is None:
                break
            diagnostics["gradient_norm"] = float(np.linalg.norm(gF))
            if diagnostics["gradient_norm"] < grad_tol:
                converged, diagnostics["stop"] = True, "stationary"
                break
            step = np.linalg.solve(lam.expected_precision * (J.T @ J) + Pi, gF)
            t = 1.0
            for _ in range(max_halvings + 1):
                cand = mu + t * step
                h_c, J_c = net.evaluate(cand)
                terms = _safe_terms(data, h_c, J_c, priors, cand, lam)
                if terms is not None and terms[0] >= F:
                    break
                t *= 0.5
            else:
                break
            mu, h, J = cand, h_c, J_c
            F, P, C, R = terms
            trajectory.append(F)
            it += 1
        diagnostics.update(prediction=h, jacobian=J)

    posterior = GaussianDensity(mu, cov=C, precision=P, check=False)
    return FitResult(
        posterior=posterior,
        lambda_posterior=lam.density(),
        free_energy=trajectory[-1],
        trajectory=trajectory,
        converged=converged,
        iterations=it,
        diagnostics=diagnostics,
    )
