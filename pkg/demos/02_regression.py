"""Linear regression with 20 regressors, 10 of them active: greedy search and model averaging."""

import argparse
from pathlib import Path

import numpy as np

from bmr import svg
from bmr.scenarios import regression_study


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("demo_output/regression"))
    args = p.parse_args(argv)

    st = regression_study(args.seed)
    s = st.search
    best = s.best_pattern
    print(f"full model F = {st.fit.free_energy:.3f}")
    print(f"{s.patterns.shape[0]} models in the final search window, best p = {s.probs[s.best]:.3f}")
    print(f"true parameters kept      : {np.sum(best & st.active)} / {np.sum(st.active)}")
    print(f"redundant parameters off  : {np.sum(~best & ~st.active)} / {np.sum(~st.active)}")
    for i in range(st.prior.dim):
        print(f"  p{i + 1:<2d} true {st.theta[i]:+.3f}  full {st.fit.posterior.mean[i]:+.3f}  "
              f"bma {s.bma.mean[i]:+.3f}  P(on) {s.per_param_prob[i]:.3f}")

    args.out.mkdir(parents=True, exist_ok=True)
    lo, hi = s.bma.credible_interval(0.9)
    svg.grid(s.patterns.T, "model space").save(args.out / "model_space.svg")
    svg.bars(s.probs, title="model probability").save(args.out / "model_probs.svg")
    svg.bars(s.bma.mean, lo, hi, title="BMA parameters").save(args.out / "bma.svg")
    print(f"plots written to {args.out}")


if __name__ == "__main__":
    main()
