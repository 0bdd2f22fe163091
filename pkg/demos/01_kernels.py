"""Reduce one posterior of each family and check the result against exact evidence."""

import numpy as np
from scipy.special import betaln, gammaln

from bmr import (BetaDensity, CategoricalDensity, DirichletDensity, GammaDensity,
                 GaussianDensity, OFF_VARIANCE, reduce)


def main():
    # coin: 7 heads, 3 tails under a flat prior; compare with a prior favouring heads
    full, post, reduced = BetaDensity(1, 1), BetaDensity(8, 4), BetaDensity(6, 2)
    res = reduce(full, post, reduced)
    exact = betaln(6 + 7, 2 + 3) - betaln(6, 2) - (betaln(8, 4) - betaln(1, 1))
    print(f"beta        dF = {res.delta_f:+.6f}  exact {exact:+.6f}")

    res = reduce(DirichletDensity([1, 1]), DirichletDensity([4, 3]), DirichletDensity([2, 1]))
    print(f"dirichlet   dF = {res.delta_f:+.6f}  reduced posterior "
          f"{res.reduced_posterior.concentrations}")

    # 5 exponential waiting times summing to 3.2
    n, total = 5, 3.2
    a, b, ar, br = 2.0, 1.0, 4.0, 2.0
    res = reduce(GammaDensity(a, b), GammaDensity(a + n, b + total), GammaDensity(ar, br))

    def log_ev(s, r):
        return s * np.log(r) - gammaln(s) + gammaln(s + n) - (s + n) * np.log(r + total)

    print(f"gamma       dF = {res.delta_f:+.6f}  exact {log_ev(ar, br) - log_ev(a, b):+.6f}")

    res = reduce(*(CategoricalDensity(p) for p in ([0.5, 0.5], [0.8, 0.2], [0.9, 0.1])))
    print(f"categorical dF = {res.delta_f:+.6f}  ln 1.48 = {np.log(1.48):+.6f}")

    # switch off the second of two Gaussian parameters
    prior = GaussianDensity([0.0, 0.0], cov=np.eye(2))
    post = GaussianDensity([0.9, 0.05], cov=[[0.1, 0.02], [0.02, 0.1]])
    off = GaussianDensity([0.0, 0.0], cov=np.diag([1.0, OFF_VARIANCE]))
    res = reduce(prior, post, off)
    print(f"gaussian    dF = {res.delta_f:+.6f}  reduced mean {res.reduced_posterior.mean}")


if __name__ == "__main__":
    main()
