"""End-to-end runs: build a problem, resolve step sizes, dispatch to an algorithm."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import distributed as dist
from .exceptions import ConfigurationError, ParameterError
from .km import CoordinateSampler, StoppingRule
from .minibatch import (BatchedProblem, MinibatchState, minibatch_step, run_stochastic,
                        validate_minibatch_params)
from .problems import (Dataset, build_batched_lasso, build_batched_logistic, build_lasso,
                       build_logistic, generate_synthetic, partition_dataset)
from .solvers import solve, validate_params
from .trace import IterationTrace, TraceRecord

ALGORITHMS = ("pdfp2o", "spdfp2o", "minibatch", "smspdfp2o", "dist-sync", "dist-async")
CENTRAL = ("pdfp2o", "spdfp2o")
BATCHED = ("minibatch", "smspdfp2o")
NETWORKED = ("dist-sync", "dist-async")


@dataclass
class RunConfig:
    """Everything needed to reproduce one solver run."""

    algorithm: str
    kind: str = "lasso"
    data_path: Optional[str] = None
    m: int = 50
    q: int = 20
    sparsity: float = 0.2
    noise: float = 0.1
    tau: Optional[float] = None
    gamma: object = "auto"
    lam: object = "auto"
    batches: Optional[int] = None
    partition: str = "contiguous"
    graph: Optional[str] = None
    graph_file: Optional[str] = None
    sampler: str = "single"
    seed: int = 0
    tol: float = 1e-8
    max_iter: int = 100_000
    check_every: Optional[int] = None
    log_every: int = 1

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.kind not in ("lasso", "logistic"):
            raise ConfigurationError(f"unknown problem kind {self.kind!r}")
        if self.algorithm in NETWORKED and self.graph is None and self.graph_file is None:
            raise ConfigurationError(f"{self.algorithm} needs a graph (--graph or --graph-file)")
        if self.algorithm in BATCHED and self.batches is None:
            raise ConfigurationError(f"{self.algorithm} needs a batch count (--batches)")
        return self

    @property
    def default_tau(self):
        return 1.0 if self.kind == "lasso" else 0.01


@dataclass
class RunResult:
    x: np.ndarray
    objective: float
    trace: IterationTrace
    gamma: float
    lam: float
    converged: bool
    extra: dict = field(default_factory=dict)


def load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.data_path is not None:
        from .libsvm import load_libsvm

        task = "regression" if cfg.kind == "lasso" else "classification"
        return load_libsvm(cfg.data_path, task=task)
    data, _ = generate_synthetic(cfg.kind, seed=cfg.seed, m=cfg.m, q=cfg.q,
                                 sparsity=cfg.sparsity, noise=cfg.noise)
    return data


def parse_graph_spec(spec, seed=0):
    """``ring:5``, ``star:5``, ``complete:4``, ``path:3`` or ``er:6:0.4``."""
    parts = spec.split(":")
    try:
        kind, n = parts[0], int(parts[1])
        p = float(parts[2]) if len(parts) > 2 else None
    except (IndexError, ValueError):
        raise ParameterError(f"bad graph spec {spec!r}; expected kind:n[:p]") from None
    return dist.make_graph(kind, n, p=p, seed=seed)


def parse_sampler_spec(spec, n_blocks, seed=0):
    """``single``, ``full``, ``independent:P`` or ``weights:w1,w2,...``."""
    name, _, arg = spec.partition(":")
    try:
        if name == "single":
            return CoordinateSampler(n_blocks, "single", seed=seed)
        if name == "full":
            return CoordinateSampler(n_blocks, "full", seed=seed)
        if name == "independent":
            return CoordinateSampler(n_blocks, "independent", probs=float(arg), seed=seed)
        if name == "weights":
            weights = [float(w) for w in arg.split(",")]
            return CoordinateSampler(n_blocks, "single", probs=weights, seed=seed)
    except ValueError as exc:
        if isinstance(exc, (ParameterError, ConfigurationError)):
            raise
        raise ParameterError(f"bad sampler spec {spec!r}") from None
    raise ParameterError(f"unknown sampler {spec!r}; expected single, full, independent:P or weights:...")


def _batched(cfg, data, n):
    part = partition_dataset(data.m, n, cfg.partition, seed=cfg.seed)
    tau = cfg.default_tau if cfg.tau is None else cfg.tau
    if cfg.kind == "lasso":
        return build_batched_lasso(data.features, data.labels, part, tau)
    return build_batched_logistic(data, part, tau)


def _run_minibatch(batched: BatchedProblem, params, stop):
    state = MinibatchState.zeros(batched)
    trace = IterationTrace()
    import time

    t0 = time.perf_counter()
    lam = params.lam
    for k in range(stop.max_iter):
        new = minibatch_step(state, batched, params)
        d = new.to_solver_state().to_vector() - state.to_solver_state().to_vector()
        n_dual = 2 * state.v.size
        res = float(np.sqrt(lam * (d[:n_dual] @ d[:n_dual]) + d[n_dual:] @ d[n_dual:]))
        state = new
        trace.iterations = k + 1
        done = res <= stop.tol
        if k % stop.log_every == 0 or done or k + 1 == stop.max_iter:
            trace.append(TraceRecord(iter=k + 1, time_s=time.perf_counter() - t0,
                                     objective=batched.objective(state.mean_x), fp_residual=res,
                                     consensus_residual=state.consensus_residual()))
        if done:
            trace.converged = True
            break
    return state, trace


def run(cfg: RunConfig, data: Optional[Dataset] = None) -> RunResult:
    """Run the configured algorithm and return the final point and its trace."""
    cfg.validate()
    if data is None:
        data = load_dataset(cfg)
    tau = cfg.default_tau if cfg.tau is None else cfg.tau
    algo = cfg.algorithm

    if algo in CENTRAL:
        if cfg.kind == "lasso":
            problem = build_lasso(data.features, data.labels, tau)
        else:
            problem = build_logistic(data, tau)
        params = validate_params(problem, cfg.gamma, cfg.lam, method=algo, seed=cfg.seed)
        stop = StoppingRule(cfg.max_iter, cfg.tol, cfg.check_every or 1, cfg.log_every)
        state, trace = solve(problem, params, stop=stop, method=algo)
        return RunResult(state.x, problem.objective(state.x), trace, params.gamma, params.lam,
                         trace.converged)

    if algo in BATCHED:
        batched = _batched(cfg, data, cfg.batches)
        params = validate_minibatch_params(batched, cfg.gamma, cfg.lam)
        if algo == "minibatch":
            stop = StoppingRule(cfg.max_iter, cfg.tol, cfg.check_every or 1, cfg.log_every)
            state, trace = _run_minibatch(batched, params, stop)
        else:
            n = batched.n_batches
            stop = StoppingRule(cfg.max_iter, cfg.tol, cfg.check_every or n, cfg.log_every)
            sampler = parse_sampler_spec(cfg.sampler, n, seed=cfg.seed)
            state, trace = run_stochastic(batched, params, sampler=sampler, stop=stop)
        x = state.mean_x
        return RunResult(x, batched.objective(x), trace, params.gamma, params.lam, trace.converged,
                         {"consensus_residual": state.consensus_residual()})

    graph = (dist.read_graph(cfg.graph_file) if cfg.graph_file
             else parse_graph_spec(cfg.graph, seed=cfg.seed))
    if cfg.batches is not None and cfg.batches != graph.n_nodes:
        raise ConfigurationError(f"--batches {cfg.batches} differs from the {graph.n_nodes} graph nodes")
    batched = _batched(cfg, data, graph.n_nodes)
    params = dist.validate_network_params(batched, graph, cfg.gamma, cfg.lam)
    net = dist.init_network(batched, graph, params)
    if algo == "dist-sync":
        stop = StoppingRule(cfg.max_iter, cfg.tol, cfg.check_every or 1, cfg.log_every)
        net, trace = dist.run_sync(net, batched, params, stop)
    else:
        stop = StoppingRule(cfg.max_iter, cfg.tol, cfg.check_every or graph.n_nodes, cfg.log_every)
        sampler = parse_sampler_spec(cfg.sampler, graph.n_nodes, seed=cfg.seed)
        net, trace = dist.run_async(net, batched, params, sampler, stop)
    x = net.mean_x
    return RunResult(x, batched.objective(x), trace, params.gamma, params.lam, trace.converged,
                     {"consensus_residual": net.consensus_residual()})
