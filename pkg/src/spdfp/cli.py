"""Command-line front end: ``spdfp {solve,oracle,gen,graph-gen,bench,compare}``.

Exit codes are 0 on success or convergence, 1 on usage, configuration or
input errors and 2 when an iterative method stops without converging.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import distributed as dist
from .exceptions import SpdfpError
from .libsvm import dump_libsvm, write_sidecar
from .oracle import lasso_oracle, logistic_oracle
from .problems import generate_synthetic
from .runner import ALGORITHMS, RunConfig, load_dataset, run
from .trace import IterationTrace

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2

# config-file keys that differ from argparse destinations
_CONFIG_ALIASES = {"algo": "algorithm", "lambda": "lam", "max_iters": "max_iter", "p": "m"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for non-convergence here
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _default_seed():
    raw = os.environ.get("PDFP_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise _UsageError(f"PDFP_SEED must be an integer, got {raw!r}") from None


def _auto_or_float(text):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _add_problem_args(p, seed):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--gen", choices=("lasso", "logistic"), help="generate a synthetic problem")
    src.add_argument("--data", help="LIBSVM file; use --kind to pick the loss")
    p.add_argument("--kind", choices=("lasso", "logistic"), help="loss for --data (default lasso)")
    p.add_argument("--m", "--p", dest="m", type=int, default=50, help="sample count")
    p.add_argument("--q", type=int, default=20, help="feature count")
    p.add_argument("--sparsity", type=float, default=0.2)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=None,
                   help="l1 weight (default 1.0 for lasso, 0.01 for logistic)")
    p.add_argument("--seed", type=int, default=seed, help="default from PDFP_SEED, else 0")
    p.add_argument("--config", help="JSON file of option defaults; flags override it")


def _add_run_args(p):
    p.add_argument("--gamma", type=_auto_or_float, default="auto")
    p.add_argument("--lambda", dest="lam", type=_auto_or_float, default="auto")
    p.add_argument("--batches", type=int, default=None)
    p.add_argument("--partition", choices=("contiguous", "strided", "seeded-random"), default="contiguous")
    p.add_argument("--graph", help="kind:n[:p], e.g. ring:5 or er:6:0.4")
    p.add_argument("--graph-file", help="edge-list file written by graph-gen")
    p.add_argument("--sampler", default="single", help="single | full | independent:P | weights:w1,...")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", dest="max_iter", type=int, default=100_000)
    p.add_argument("--check-every", type=int, default=None,
                   help="ticks between full residual checks (default: number of blocks)")
    p.add_argument("--log-every", type=int, default=1)


def build_parser():
    seed = _default_seed()
    parser = _Parser(prog="spdfp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run one algorithm and write its trace")
    p.add_argument("--algo", dest="algorithm", choices=ALGORITHMS, help="required, on the command line or in --config")
    _add_problem_args(p, seed)
    _add_run_args(p)
    p.add_argument("--trace", help="CSV trace output path")
    p.add_argument("--result", help="JSON result output path")

    p = sub.add_parser("oracle", help="reference solution of the centralized problem")
    _add_problem_args(p, seed)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", dest="max_iter", type=int, default=1_000_000)
    p.add_argument("--out", required=True, help="JSON output path")

    p = sub.add_parser("gen", help="write a synthetic dataset in LIBSVM format plus a JSON sidecar")
    p.add_argument("kind", choices=("lasso", "logistic"))
    p.add_argument("--m", "--p", dest="m", type=int, default=50)
    p.add_argument("--q", type=int, default=20)
    p.add_argument("--sparsity", type=float, default=0.2)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", required=True)

    p = sub.add_parser("graph-gen", help="write a connected graph as an edge list")
    p.add_argument("--kind", choices=("ring", "path", "star", "complete", "er"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, default=None, help="edge probability for er")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", help="output path (default: stdout)")

    p = sub.add_parser("bench", help="oracle plus several algorithms on one problem, then compare")
    p.add_argument("--algos", required=True, help="comma-separated algorithm names")
    _add_problem_args(p, seed)
    _add_run_args(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--gap-tol", type=float, default=1e-4)

    p = sub.add_parser("compare", help="final objective gaps of traces against an oracle")
    p.add_argument("traces", nargs="*")
    p.add_argument("--oracle", required=True, help="JSON written by the oracle subcommand")
    p.add_argument("--gap-tol", type=float, default=1e-4)
    p.add_argument("--absolute", action="store_true", help="absolute instead of relative gap")
    p.add_argument("--consensus-tol", type=float, default=None)
    return parser


def _apply_config(parser, argv):
    """Reparse with the JSON config as defaults so explicit flags win."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise _UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise _UsageError(f"config {path} must hold a JSON object")
    known = vars(args)
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    cfg = {_CONFIG_ALIASES.get(k, k): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - set(known))
    if unknown:
        raise _UsageError(f"unknown config keys: {', '.join(unknown)}")
    # command-specific subparser holds the defaults
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def _run_config(args) -> RunConfig:
    kind = args.gen or args.kind or "lasso"
    return RunConfig(
        algorithm=getattr(args, "algorithm", "spdfp2o"), kind=kind, data_path=args.data,
        m=args.m, q=args.q, sparsity=args.sparsity, noise=args.noise, tau=args.tau,
        gamma=args.gamma, lam=args.lam, batches=args.batches, partition=args.partition,
        graph=args.graph, graph_file=args.graph_file, sampler=args.sampler, seed=args.seed,
        tol=args.tol, max_iter=args.max_iter, check_every=args.check_every, log_every=args.log_every,
    )


def _fmt(value):
    return "nan" if value is None else f"{value:.12g}"


def _cmd_solve(args, out):
    if args.algorithm is None:
        raise _UsageError("solve needs --algo (or an 'algo' key in --config)")
    if args.algorithm not in ALGORITHMS:
        raise _UsageError(f"unknown algorithm {args.algorithm!r}; expected one of {ALGORITHMS}")
    cfg = _run_config(args)
    res = run(cfg)
    if args.trace:
        res.trace.to_csv(args.trace)
    fps = [r.fp_residual for r in res.trace.records if r.fp_residual is not None]
    fp = fps[-1] if fps else None
    cons = res.extra.get("consensus_residual")
    print(f"algorithm {cfg.algorithm}", file=out)
    print(f"gamma {res.gamma!r}", file=out)
    print(f"lambda {res.lam!r}", file=out)
    print(f"iterations {res.trace.iterations}", file=out)
    print(f"objective {res.objective!r}", file=out)
    print(f"fp_residual {_fmt(fp)}", file=out)
    if cons is not None:
        print(f"consensus_residual {_fmt(cons)}", file=out)
    print(f"converged {str(res.converged).lower()}", file=out)
    if args.result:
        with open(args.result, "w") as fh:
            json.dump({"algorithm": cfg.algorithm, "x": res.x.tolist(), "objective": res.objective,
                       "iterations": res.trace.iterations, "converged": res.converged,
                       "gamma": res.gamma, "lambda": res.lam, "fp_residual": fp,
                       "consensus_residual": cons}, fh, indent=2)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _oracle_for(cfg: RunConfig, tol, max_iter):
    data = load_dataset(cfg)
    tau = cfg.default_tau if cfg.tau is None else cfg.tau
    if cfg.kind == "lasso":
        return lasso_oracle(data.features, data.labels, tau, tol=tol, max_iter=max_iter)
    return logistic_oracle(data.features, data.labels, tau, tol=tol, max_iter=max_iter)


def _cmd_oracle(args, out):
    cfg = RunConfig(algorithm="spdfp2o", kind=args.gen or args.kind or "lasso", data_path=args.data,
                    m=args.m, q=args.q, sparsity=args.sparsity, noise=args.noise, tau=args.tau,
                    seed=args.seed)
    res = _oracle_for(cfg, args.tol, args.max_iter)
    with open(args.out, "w") as fh:
        json.dump(res.as_dict(), fh, indent=2)
    print(f"objective {res.objective!r}", file=out)
    print(f"certificate {res.certificate:.3e}", file=out)
    print(f"iterations {res.iterations}", file=out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_gen(args, out):
    data, x_true = generate_synthetic(args.kind, seed=args.seed, m=args.m, q=args.q,
                                      sparsity=args.sparsity, noise=args.noise)
    dump_libsvm(args.out, data)
    write_sidecar(args.out + ".json", kind=args.kind, seed=args.seed, m=args.m, q=args.q,
                  sparsity=args.sparsity, noise=args.noise, ground_truth=x_true)
    print(f"wrote {args.out} ({data.m} samples, {data.q} features)", file=out)
    return EXIT_OK


def _cmd_graph_gen(args, out):
    graph = dist.make_graph(args.kind, args.n, p=args.p, seed=args.seed)
    if args.out:
        dist.write_graph(args.out, graph)
        print(f"wrote {args.out} ({graph.n_nodes} nodes, {graph.n_edges} edges)", file=out)
    else:
        out.write(f"# {graph.n_nodes} nodes, {graph.n_edges} edges\n")
        for n, m in graph.edges:
            out.write(f"{n} {m}\n")
    return EXIT_OK


def _gap(objective, ref, absolute):
    d = abs(objective - ref)
    return d if absolute else d / max(abs(ref), np.finfo(float).tiny)


def _compare(traces, oracle_path, gap_tol, absolute=False, consensus_tol=None, out=sys.stdout):
    if not traces:
        raise _UsageError("compare needs at least one trace file")
    try:
        with open(oracle_path) as fh:
            ref = float(json.load(fh)["objective"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise _UsageError(f"cannot read oracle {oracle_path}: {exc}") from None
    loaded = []
    for path in traces:
        if not Path(path).is_file():
            raise _UsageError(f"missing trace file {path}")
        loaded.append((path, IterationTrace.from_csv(path)))
    all_ok = True
    kind = "absolute" if absolute else "relative"
    for path, tr in loaded:
        rows = [r for r in tr.records if np.isfinite(r.objective)]
        if not rows:
            print(f"FAIL {path}: no objective values", file=out)
            all_ok = False
            continue
        gaps = [_gap(r.objective, ref, absolute) for r in rows]
        hit = next((r.iter for r, g in zip(rows, gaps) if g <= gap_tol), None)
        ok = gaps[-1] <= gap_tol
        cons = rows[-1].consensus_residual
        if consensus_tol is not None and cons is not None:
            ok = ok and cons <= consensus_tol
        all_ok = all_ok and ok
        hit_s = "never" if hit is None else str(hit)
        cons_s = "" if cons is None else f" consensus={cons:.3e}"
        print(f"{'PASS' if ok else 'FAIL'} {path}: final_objective={rows[-1].objective!r} "
              f"{kind}_gap={gaps[-1]:.3e} iters_to_tol={hit_s}{cons_s}", file=out)
    return EXIT_OK if all_ok else EXIT_NOT_CONVERGED


def _cmd_compare(args, out):
    return _compare(args.traces, args.oracle, args.gap_tol, args.absolute, args.consensus_tol, out)


def _bench_job(cfg: RunConfig, trace_path):
    res = run(cfg)
    res.trace.to_csv(trace_path)
    return cfg.algorithm, res.converged, res.trace.iterations


def _cmd_bench(args, out):
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGORITHMS]
    if not algos or bad:
        raise _UsageError(f"--algos must list algorithms from {ALGORITHMS}")
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    base = _run_config(args)
    oracle = _oracle_for(base, 1e-10, 1_000_000)
    with open(outdir / "oracle.json", "w") as fh:
        json.dump(oracle.as_dict(), fh, indent=2)
    jobs = []
    for algo in algos:
        cfg = _run_config(args)
        cfg.algorithm = algo
        if algo in ("minibatch", "smspdfp2o") and cfg.batches is None:
            cfg.batches = 3
        if algo.startswith("dist-") and cfg.graph is None and cfg.graph_file is None:
            cfg.graph = "ring:5"
        cfg.validate()
        jobs.append((cfg, str(outdir / f"{algo}.csv")))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_job, *zip(*jobs)))
    else:
        results = [_bench_job(cfg, path) for cfg, path in jobs]
    for algo, converged, iters in results:
        print(f"{algo}: iterations={iters} converged={str(converged).lower()}", file=out)
    return _compare([p for _, p in jobs], str(outdir / "oracle.json"), args.gap_tol, out=out)


COMMANDS = {
    "solve": _cmd_solve,
    "oracle": _cmd_oracle,
    "gen": _cmd_gen,
    "graph-gen": _cmd_graph_gen,
    "bench": _cmd_bench,
    "compare": _cmd_compare,
}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    try:
        parser = build_parser()
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args, out)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    except (SpdfpError, ValueError, OSError) as exc:
        print(f"spdfp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
