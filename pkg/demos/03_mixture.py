"""Five clusters, eight initial components: merge and prune until nothing changes."""

import argparse
from pathlib import Path

from bmr import svg
from bmr.scenarios import mixture_study


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("demo_output/mixture"))
    args = p.parse_args(argv)

    st = mixture_study(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for r, h in enumerate(st.history, 1):
        removed = h.get("prune", {}).get("removed", [])
        print(f"round {r}: K = {h['k']}, F = {h['free_energy']:.2f}, "
              f"merge groups {h.get('groups')}, pruned {removed}")
        svg.scatter(st.data[:, 0], st.data[:, 1], h["assignments"], h["means"],
                    title=f"round {r}: K = {h['k']}").save(args.out / f"round{r}.svg")
    print(f"final K = {st.posterior.n_clusters}")
    for k, (m, c) in enumerate(zip(st.posterior.means, st.posterior.counts), 1):
        print(f"  cluster {k}: centre ({m[0]:+.2f}, {m[1]:+.2f}), {c:.1f} points")


if __name__ == "__main__":
    main()
