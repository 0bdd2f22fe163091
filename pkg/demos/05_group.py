"""Sixteen subjects in two groups: second-level fit from subject posteriors, then reduction."""

import argparse

import numpy as np

from bmr.scenarios import group_study


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)

    st = group_study(args.seed)
    post = st.peb.beta_posterior
    lo, hi = post.credible_interval(0.9)
    names = ["mean 1", "mean 2", "group diff 1", "group diff 2"]
    print(f"second-level F = {st.peb.free_energy:.3f} after {st.peb.iterations} iterations")
    for i, name in enumerate(names):
        print(f"  {name:<13s} true {st.beta_true[i]:+.2f}  est {post.mean[i]:+.3f} "
              f"[{lo[i]:+.3f}, {hi[i]:+.3f}]  P(on) {st.search.per_param_prob[i]:.3f}")
    best = st.search.patterns[np.argmax(st.search.probs)]
    print(f"most probable pattern: {best.astype(int).tolist()} "
          f"(p = {st.search.probs.max():.3f})")


if __name__ == "__main__":
    main()
