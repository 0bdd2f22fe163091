"""
Scoring reduced Gaussian models defined by on/off switch patterns.

A pattern is a boolean vector over the parameters of a fitted full model:
``True`` keeps the full prior, ``False`` replaces it by a precise shrinkage
prior ``N(0, off_variance)``. Every score is a Gaussian reduction of the one
full-model posterior, so large model spaces cost no refitting.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import warnings

import numpy as np

from .densities import GaussianDensity
from .fit import FitResult
from .reduction import OFF_VARIANCE, GaussianStats, reduce_gaussian_stack
from .special import DomainError, softmax

__all__ = [
    "SearchResult",
    "as_patterns",
    "apply_pattern",
    "pattern_priors",
    "score_patterns",
    "score_patterns_detailed",
    "model_posterior",
    "bayesian_model_average",
    "family_inference",
    "enumerate_patterns",
    "exhaustive_search",
    "greedy_search",
]

_CHUNK = 2048


@dataclass
class SearchResult:
    """Scored model space.

    Attributes
    ----------
    patterns : ndarray of bool, shape (M, n)
    delta_f : ndarray, shape (M,)
        Free energy of each pattern relative to the full (all-on) model.
    probs : ndarray, shape (M,)
        Posterior model probabilities under a uniform model prior.
    bma : GaussianDensity
        Moment-matched Bayesian model average of the reduced posteriors.
    per_param_prob : ndarray, shape (n,)
        Posterior probability that each parameter is switched on.
    candidates : ndarray of int
        Parameters the search was allowed to switch off.
    history : list of dict
        Greedy steps taken (empty for exhaustive searches).
    failures : dict
        ``{pattern index: ImproperPosteriorError}``.
    """

    patterns: np.ndarray
    delta_f: np.ndarray
    probs: np.ndarray
    bma: GaussianDensity
    per_param_prob: np.ndarray
    candidates: np.ndarray
    history: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    @property
    def best(self):
        """Index of the most probable pattern."""
        return int(np.argmax(self.probs))

    @property
    def best_pattern(self):
        return self.patterns[self.best]


def as_patterns(patterns, n):
    P = np.atleast_2d(np.asarray(patterns, dtype=bool))
    if P.shape[1] != n:
        raise ValueError(f"patterns have length {P.shape[1]}, expected {n}")
    return P


def _posterior_of(fit):
    return fit.posterior if isinstance(fit, FitResult) else fit


def pattern_priors(full_prior, patterns, off_variance=OFF_VARIANCE):
    """Reduced prior precisions, means and log-determinants for a stack of patterns.

    Returns
    -------
    Pi_r : ndarray, shape (B, n, n)
    eta_r : ndarray, shape (B, n)
    cov_r : ndarray, shape (B, n, n)
    """
    patterns = as_patterns(patterns, full_prior.dim)
    on = patterns.astype(float)
    off = 1.0 - on
    eta_r = full_prior.mean * on
    S = full_prior.cov
    if np.count_nonzero(S - np.diag(np.diag(S))) == 0:
        v = np.diag(S) * on + off_variance * off
        idx = np.arange(full_prior.dim)
        cov_r = np.zeros(patterns.shape + (full_prior.dim,))
        Pi_r = np.zeros_like(cov_r)
        cov_r[:, idx, idx] = v
        Pi_r[:, idx, idx] = 1.0 / v
    else:
        mask = on[:, :, None] * on[:, None, :]
        cov_r = S * mask
        idx = np.arange(full_prior.dim)
        cov_r[:, idx, idx] += off_variance * off
        Pi_r = np.linalg.inv(cov_r)
        Pi_r = 0.5 * (Pi_r + np.swapaxes(Pi_r, -1, -2))
    full = patterns.all(axis=1)
    Pi_r[full] = full_prior.precision
    eta_r[full] = full_prior.mean
    cov_r[full] = full_prior.cov
    return Pi_r, eta_r, cov_r


def apply_pattern(full_prior, pattern, off_variance=OFF_VARIANCE):
    """Reduced prior: "off" entries get mean 0, variance ``off_variance`` and no covariance."""
    Pi_r, eta_r, cov_r = pattern_priors(full_prior, pattern, off_variance)
    return GaussianDensity(eta_r[0], cov=cov_r[0], precision=Pi_r[0], check=False)


def score_patterns_detailed(fit, full_prior, patterns, off_variance=OFF_VARIANCE,
                            threads=None):
    """Score patterns, also returning the reduced posteriors.

    Returns
    -------
    delta_f : ndarray, shape (B,)
        ``nan`` where the reduced posterior is improper.
    mu_r : ndarray, shape (B, n)
    Pr : ndarray, shape (B, n, n)
    failures : dict
    """
    posterior = _posterior_of(fit)
    patterns = as_patterns(patterns, full_prior.dim)
    stats = GaussianStats(full_prior, posterior)
    chunks = [slice(i, min(i + _CHUNK, len(patterns)))
              for i in range(0, len(patterns), _CHUNK)]

    def run(sl):
        Pi_r, eta_r, _ = pattern_priors(full_prior, patterns[sl], off_variance)
        return reduce_gaussian_stack(stats, Pi_r, eta_r, errors="record")

    if threads and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(sl) for sl in chunks]

    delta_f = np.concatenate([p[0] for p in parts])
    mu_r = np.concatenate([p[1] for p in parts])
    Pr = np.concatenate([p[2] for p in parts])
    failures = {}
    for sl, p in zip(chunks, parts):
        failures.update({sl.start + i: e for i, e in p[3].items()})
    return delta_f, mu_r, Pr, failures


def score_patterns(fit, full_prior, patterns, off_variance=OFF_VARIANCE, threads=None):
    """Log Bayes factor of each pattern against the full model.

    Equivalent to one :func:`~bmr.reduction.reduce_gaussian` call per
    pattern with :func:`apply_pattern` as the reduced prior; output order
    follows input order whatever ``threads`` is. Improper reductions are
    reported as ``nan`` with a warning rather than aborting the batch.
    """
    delta_f, _, _, failures = score_patterns_detailed(
        fit, full_prior, patterns, off_variance, threads
    )
    if failures:
        warnings.warn(f"{len(failures)} pattern(s) gave improper reduced posteriors",
                      RuntimeWarning)
    return delta_f


def model_posterior(delta_f):
    """Posterior over models from their free energies, uniform model prior.

    ``nan`` scores (failed reductions) count as ``-inf``.
    """
    f = np.asarray(delta_f, dtype=float)
    return softmax(np.where(np.isnan(f), -np.inf, f))


def bayesian_model_average(posteriors, probs):
    """Moment-matched mixture of Gaussian posteriors.

    Mean ``sum_m p_m mu_m`` and covariance
    ``sum_m p_m (C_m + mu_m mu_m^T) - mean mean^T``.
    """
    probs = np.asarray(probs, dtype=float)
    if len(posteriors) != probs.size:
        raise ValueError("need one weight per posterior")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
        raise DomainError("model weights must be non-negative and sum to 1")
    dims = {p.dim for p in posteriors}
    if len(dims) != 1:
        raise ValueError(f"posteriors have differing dimensions {sorted(dims)}")
    mus = np.stack([p.mean for p in posteriors])
    covs = np.stack([p.cov for p in posteriors])
    return _moment_match(mus, covs, probs)


def _moment_match(mus, covs, probs):
    keep = probs > 0
    mus, covs, probs = mus[keep], covs[keep], probs[keep]
    mean = probs @ mus
    second = np.einsum("m,mij->ij", probs, covs) + np.einsum("m,mi,mj->ij", probs, mus, mus)
    cov = second - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    return GaussianDensity(mean, cov=cov, check=False)


def family_inference(patterns, probs, param_index):
    """Pooled probability that parameter ``param_index`` is on.

    Returns
    -------
    prob : float
    degenerate : bool
        True when every model has the parameter on, or every model has it off.
    """
    patterns = np.atleast_2d(np.asarray(patterns, dtype=bool))
    probs = np.asarray(probs, dtype=float)
    on = patterns[:, param_index]
    degenerate = bool(on.all() or not on.any())
    return float(np.sum(probs[on])), degenerate


def enumerate_patterns(base, indices):
    """All ``2**len(indices)`` variations of ``base`` over ``indices``.

    Row ``k`` switches index ``indices[j]`` on when bit ``j`` of ``k`` is
    set, so the last row has every enumerated parameter on.
    """
    base = np.asarray(base, dtype=bool)
    indices = np.asarray(indices, dtype=int)
    k = np.arange(2 ** indices.size)
    bits = ((k[:, None] >> np.arange(indices.size)) & 1).astype(bool)
    out = np.repeat(base[None], k.size, axis=0)
    out[:, indices] = bits
    return out


def _summarise(posterior, full_prior, patterns, off_variance, threads, candidates,
               history=()):
    delta_f, mu_r, Pr, failures = score_patterns_detailed(
        posterior, full_prior, patterns, off_variance, threads
    )
    probs = model_posterior(delta_f)
    live = probs > 0
    covs = np.zeros_like(Pr)
    covs[live] = np.linalg.inv(Pr[live])
    bma = _moment_match(mu_r, covs, probs)
    per_param = patterns.T.astype(float) @ probs
    return SearchResult(
        patterns=patterns,
        delta_f=delta_f,
        probs=probs,
        bma=bma,
        per_param_prob=per_param,
        candidates=np.asarray(candidates, dtype=int),
        history=list(history),
        failures=failures,
    )


def exhaustive_search(fit, full_prior, candidates, off_variance=OFF_VARIANCE, threads=None):
    """Score every on/off combination of ``candidates`` (others stay on)."""
    candidates = np.asarray(candidates, dtype=int)
    if candidates.size > 20:
        raise ValueError("exhaustive search over more than 20 candidates is not supported")
    patterns = enumerate_patterns(np.ones(full_prior.dim, dtype=bool), candidates)
    return _summarise(_posterior_of(fit), full_prior, patterns, off_variance, threads,
                      candidates)


def greedy_search(fit, full_prior, candidates, off_variance=OFF_VARIANCE, width=8,
                  threads=None):
    """Greedy backward elimination followed by a local exhaustive sweep.

    Starting from the full model, each step switches off the single
    candidate whose removal raises the free energy most (ties go to the
    lowest index) until no removal helps. The ``width`` candidates whose
    state is least certain (smallest ``|delta F|`` for flipping them) are
    then enumerated in all ``2**width`` combinations, the rest held at
    their greedy state.

    Returns
    -------
    SearchResult
    """
    posterior = _posterior_of(fit)
    candidates = np.asarray(sorted(set(int(c) for c in candidates)), dtype=int)
    if candidates.size == 0:
        raise ValueError("need at least one candidate parameter")
    n = full_prior.dim
    state = np.ones(n, dtype=bool)
    current = 0.0
    history = []
    while True:
        on = candidates[state[candidates]]
        if on.size == 0:
            break
        trials = np.repeat(state[None], on.size, axis=0)
        trials[np.arange(on.size), on] = False
        scores = score_patterns(posterior, full_prior, trials, off_variance, threads)
        scores = np.where(np.isnan(scores), -np.inf, scores)
        j = int(np.argmax(scores))
        if not scores[j] > current:
            break
        state[on[j]] = False
        history.append({"off": int(on[j]), "delta_f": float(scores[j]),
                        "gain": float(scores[j] - current)})
        current = float(scores[j])

    flips = np.repeat(state[None], candidates.size, axis=0)
    flips[np.arange(candidates.size), candidates] = ~state[candidates]
    gain = score_patterns(posterior, full_prior, flips, off_variance, threads) - current
    gain = np.where(np.isnan(gain), np.inf, gain)
    w = min(width, candidates.size)
    order = np.lexsort((candidates, np.abs(gain)))
    chosen = np.sort(candidates[order[:w]])
    patterns = enumerate_patterns(state, chosen)
    result = _summarise(posterior, full_prior, patterns, off_variance, threads, candidates,
                        history)
    result.history.append({"enumerated": chosen.tolist(), "greedy_delta_f": current})
    return result
