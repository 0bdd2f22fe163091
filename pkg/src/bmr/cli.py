"""
Command line interface.

    bmr reduce --family gaussian --prior p.json --posterior q.json --reduced r.json
    bmr demo {glm,gmm,net,peb} [--mode compare|search|both]
    bmr benchmark --dim 20 --patterns 10000

Global flags (before the subcommand): ``--seed``, ``--out``, ``--format``,
``--threads``. Exit codes: 0 success, 1 usage or malformed input, 2 domain
or numerical error.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import io as bio
from . import svg
from .densities import FAMILIES, GaussianDensity, SchemaError
from .fit import FitError
from .reduction import reduce

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="bmr", description="Bayesian model reduction toolkit.")
    p.add_argument("--seed", type=int, default=1, help="random seed (default 1)")
    p.add_argument("--out", type=Path, default=None, help="directory for output files")
    p.add_argument("--format", choices=["csv", "json"], default="csv",
                   help="table format for --out (default csv)")
    p.add_argument("--threads", type=int, default=None, help="worker threads for scoring")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("reduce", help="reduce a posterior under a new prior")
    r.add_argument("--family", required=True, choices=sorted(FAMILIES))
    r.add_argument("--prior", required=True, type=Path)
    r.add_argument("--posterior", required=True, type=Path)
    r.add_argument("--reduced", required=True, type=Path)

    d = sub.add_parser("demo", help="run a worked example")
    d.add_argument("name", choices=["glm", "gmm", "net", "peb"])
    d.add_argument("--mode", choices=["compare", "search", "both"], default="both",
                   help="network demo: hypothesis comparison, search or both")

    b = sub.add_parser("benchmark", help="time batch scoring of reduced Gaussian models")
    b.add_argument("--dim", type=int, default=20)
    b.add_argument("--patterns", type=int, default=10000)
    return p


class Report:
    """Collects tables and writes them with provenance once the command finishes."""

    def __init__(self, args, inputs=()):
        self.args = args
        self.config = {k: (str(v) if isinstance(v, Path) else v)
                       for k, v in vars(args).items() if k != "out"}
        self.prov = bio.provenance(args.seed, self.config, inputs)
        self.tables = {}
        self.documents = {}
        self.plots = {}

    def table(self, name, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])
        return self

    def document(self, name, obj):
        self.documents[name] = obj

    def plot(self, name, fig):
        self.plots[name] = fig

    def write(self):
        out = self.args.out
        if out is None:
            return []
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, obj in self.documents.items():
            written.append(bio.write_json(out / f"{name}.json", obj, self.prov))
        if self.args.format == "csv":
            for name, (header, rows) in self.tables.items():
                written.append(bio.write_table(out / f"{name}.csv", header, rows, self.prov))
        elif self.tables:
            doc = {name: {"header": h, "rows": rows} for name, (h, rows) in self.tables.items()}
            written.append(bio.write_json(out / "report.json", {"tables": doc}, self.prov))
        for name, fig in self.plots.items():
            path = out / f"{name}.svg"
            fig.save(path)
            written.append(path)
        return written


def _print_table(header, rows, limit=None):
    rows = rows if limit is None else rows[:limit]
    cells = [[str(h) for h in header]] + [
        [f"{v:.6g}" if isinstance(v, (float, np.floating)) else str(v) for v in r] for r in rows
    ]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)))


def cmd_reduce(args):
    inputs = [args.prior, args.posterior, args.reduced]
    dens = []
    for path in inputs:
        try:
            d = bio.read_density(path)
        except SchemaError as exc:
            raise SchemaError(exc.field, f"{path}: {exc.message}") from None
        if d.family != args.family:
            raise SchemaError("family", f"{path}: expected {args.family}, found {d.family}")
        dens.append(d)
    result = reduce(*dens)
    print(f"delta_f = {bio.format_number(result.delta_f)}")
    rep = Report(args, inputs)
    rep.document("reduced_posterior", result.reduced_posterior.to_dict())
    rep.table("delta_f", ["family", "delta_f"], [[args.family, result.delta_f]])
    rep.write()
    return result


def _pattern_rows(patterns):
    return [[m + 1] + p.astype(int).tolist() for m, p in enumerate(patterns)]


def demo_glm(args):
    from .scenarios import regression_study

    st = regression_study(args.seed)
    s = st.search
    post = st.fit.posterior
    n = st.prior.dim
    lo, hi = post.credible_interval(0.9)
    blo, bhi = s.bma.credible_interval(0.9)
    rep = Report(args)
    pnames = [f"p{i + 1}" for i in range(n)]
    rep.table("model_space", ["model"] + pnames, _pattern_rows(s.patterns))
    rep.table("delta_f", ["model", "delta_f", "probability"],
              [[m + 1, f, p] for m, (f, p) in enumerate(zip(s.delta_f, s.probs))])
    rep.table("parameters", ["parameter", "true", "full_mean", "full_lo90", "full_hi90",
                             "bma_mean", "bma_lo90", "bma_hi90", "prob_on"],
              [[i + 1, st.theta[i], post.mean[i], lo[i], hi[i], s.bma.mean[i], blo[i], bhi[i],
                s.per_param_prob[i]] for i in range(n)])
    rep.table("fit", ["iteration", "free_energy"],
              [[i + 1, f] for i, f in enumerate(st.fit.trajectory)])
    rep.plot("model_space", svg.grid(s.patterns.T, "model space"))
    rep.plot("model_probs", svg.bars(s.probs, title="model probability"))
    rep.plot("bma", svg.bars(s.bma.mean, blo, bhi, title="BMA parameters"))
    rep.plot("prob_on", svg.bars(s.per_param_prob, title="P(parameter on)"))
    rep.plot("prediction", svg.lines(np.arange(st.y.size),
                                     [st.y, st.design @ s.bma.mean], title="data and prediction"))
    best = s.best_pattern
    print(f"full model F = {st.fit.free_energy:.4f}, {s.patterns.shape[0]} models in final search")
    print(f"best model {s.best + 1} (p = {s.probs[s.best]:.3f}); "
          f"parameters on: {(np.flatnonzero(best) + 1).tolist()}")
    _print_table(*rep.tables["parameters"])
    rep.write()
    return st


def demo_gmm(args):
    from .scenarios import mixture_study

    st = mixture_study(args.seed)
    rep = Report(args)
    rows = [[r + 1, h["k"], h["free_energy"], len(h.get("prune", {}).get("removed", []))]
            for r, h in enumerate(st.history)]
    rep.table("history", ["round", "k", "free_energy", "pruned"], rows)
    prune_rows = []
    for r, h in enumerate(st.history):
        for k, df in enumerate(h.get("prune", {}).get("delta_f", [])):
            prune_rows.append([r + 1, k + 1, df, int(k in h["prune"]["removed"])])
    rep.table("prune", ["round", "cluster", "delta_f", "removed"], prune_rows)
    rep.table("assignments", ["x", "y", "cluster"],
              [[*x, c] for x, c in zip(st.data, st.posterior.assignments)])
    rep.table("centres", ["cluster", "x", "y", "count"],
              [[k + 1, *m, c] for k, (m, c) in
               enumerate(zip(st.posterior.means, st.posterior.counts))])
    for r, h in enumerate(st.history):
        rep.plot(f"round{r + 1}", svg.scatter(st.data[:, 0], st.data[:, 1], h["assignments"],
                                              h["means"], title=f"round {r + 1}: K = {h['k']}"))
    _print_table(*rep.tables["history"])
    print(f"final K = {st.posterior.n_clusters}")
    rep.write()
    return st


def demo_net(args):
    from .scenarios import network_study
    from .dynamics import unpack

    st = network_study(args.seed, mode=args.mode)
    rep = Report(args)
    n, r = st.spec.n_nodes, st.spec.n_inputs
    print(f"SNR = {st.data.meta['snr_db']:.2f} dB, full model F = {st.fit.free_energy:.2f}, "
          f"converged = {st.fit.converged}")
    if st.hypotheses:
        h = st.hypotheses
        rows = [[name, f, p] for name, f, p in zip(h["names"], h["delta_f"], h["probs"])]
        rep.table("compare", ["model", "delta_f", "probability"], rows)
        rep.plot("compare", svg.bars(h["probs"], title="model probability"))
        _print_table(*rep.tables["compare"])
    A_true = st.spec.a_matrix
    A_full = unpack(st.fit.posterior.mean, n, r)[0]
    rep.table("a_true", [f"from{j + 1}" for j in range(n)], A_true.tolist())
    rep.table("a_full", [f"from{j + 1}" for j in range(n)], A_full.tolist())
    if st.search is not None:
        s = st.search
        A_bma = unpack(s.bma.mean, n, r)[0]
        rep.table("a_bma", [f"from{j + 1}" for j in range(n)], A_bma.tolist())
        rep.table("adjacency", [f"from{j + 1}" for j in range(n)],
                  st.recovered_adjacency().astype(int).tolist())
        lo, hi = s.bma.credible_interval(0.9)
        rep.table("parameters", ["parameter", "true", "full_mean", "bma_mean", "bma_lo90",
                                 "bma_hi90", "prob_on"],
                  [[i + 1, st.spec.theta[i], st.fit.posterior.mean[i], s.bma.mean[i], lo[i],
                    hi[i], s.per_param_prob[i]] for i in range(st.prior.dim)])
        rep.plot("adjacency", svg.grid(st.recovered_adjacency(), "recovered adjacency"))
        rep.plot("bma", svg.bars(s.bma.mean, lo, hi, title="BMA parameters"))
        print(f"search: {s.patterns.shape[0]} models, adjacency discrepancies = "
              f"{st.discrepancies()}")
    rep.plot("data", svg.lines(st.data.times, st.data.values.T, title="observations"))
    rep.write()
    return st


def demo_peb(args):
    from .scenarios import group_study

    st = group_study(args.seed)
    res, s = st.peb, st.search
    lo, hi = res.beta_posterior.credible_interval(0.9)
    k = st.level2.interest.size
    names = [f"mean{j + 1}" for j in range(k)] + [f"group{j + 1}" for j in range(k)]
    rep = Report(args)
    rep.table("beta", ["parameter", "true", "mean", "lo90", "hi90", "prob_on"],
              [[names[i], st.beta_true[i], res.beta_posterior.mean[i], lo[i], hi[i],
                s.per_param_prob[i]] for i in range(len(names))])
    rep.table("models", ["model"] + names + ["delta_f", "probability"],
              [[m + 1] + p.astype(int).tolist() + [f, pr]
               for m, (p, f, pr) in enumerate(zip(s.patterns, s.delta_f, s.probs))])
    rep.table("subjects", ["subject", "free_energy", "reduced_free_energy"],
              [[i + 1, f.free_energy, g] for i, (f, g) in
               enumerate(zip(st.subject_fits, res.per_subject_reduced_f))])
    print(f"second-level F = {res.free_energy:.4f}, converged = {res.converged}")
    _print_table(*rep.tables["beta"])
    rep.write()
    return st


def cmd_benchmark(args):
    from .rng import make_rng
    from .search import score_patterns

    n, m = args.dim, args.patterns
    if n < 1 or m < 1:
        raise UsageError("--dim and --patterns must be positive")
    rng = make_rng(args.seed, "benchmark")
    prior = GaussianDensity(np.zeros(n), cov=np.eye(n))
    B = rng.standard_normal((n, n))
    post = GaussianDensity(rng.standard_normal(n) * 0.5,
                           precision=np.eye(n) + B @ B.T / n)
    patterns = rng.random((m, n)) < 0.5
    t0 = time.perf_counter()
    dF = score_patterns(post, prior, patterns, threads=args.threads)
    wall = time.perf_counter() - t0
    rate = m / wall if wall > 0 else float("inf")
    print(f"scored {m} models at dimension {n} in {wall:.4f} s ({rate:.0f} models/s)")
    rep = Report(args)
    rep.table("benchmark", ["dim", "patterns", "wall_seconds", "models_per_second"],
              [[n, m, wall, rate]])
    rep.table("delta_f", ["pattern", "delta_f"], [[i + 1, f] for i, f in enumerate(dF)])
    rep.write()
    return wall


_DEMOS = {"glm": demo_glm, "gmm": demo_gmm, "net": demo_net, "peb": demo_peb}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"bmr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    stage = args.command if args.command != "demo" else f"demo {args.name}"
    try:
        if args.command == "reduce":
            cmd_reduce(args)
        elif args.command == "demo":
            _DEMOS[args.name](args)
        else:
            cmd_benchmark(args)
    except UsageError as exc:
        print(f"bmr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"bmr: malformed input: field '{exc.field}': {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"bmr: {stage}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        # ImproperPosteriorError and DomainError are ValueErrors;
        # FactorizationError is a LinAlgError
        print(f"bmr: {stage} failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
