"""Acceptance gate: the ten criteria at their stated tolerances.

Each test records one PASS/FAIL line in ``RESULTS``; ``conftest.py`` prints
them at the end of the session, and each line is also printed when it is
produced (visible with ``-s``).
"""
import io
import time

import numpy as np
import pytest

from spdfp import distributed as dist
from spdfp.cli import main as cli_main
from spdfp.km import BlockOperator, CoordinateSampler, StoppingRule, masked_apply
from spdfp.minibatch import (MinibatchState, block_partition, lift_problem, minibatch_step,
                             run_stochastic, smspdfp2o_step, validate_minibatch_params)
from spdfp.operators import matrix_map, power_iteration_opnorm
from spdfp.oracle import lasso_oracle, logistic_oracle
from spdfp.problems import (build_batched_lasso, build_batched_logistic, build_lasso,
                            generate_synthetic, logistic_value_grad, partition_dataset,
                            quadratic_value_grad)
from spdfp.prox import ConsensusIndicator, L1Norm, PairConsensusIndicator, SeparableSum, ZeroFunction
from spdfp.solvers import (SolverState, as_fixed_point_operator, pdfp2o_step, solve,
                           spdfp2o_step, validate_params)

RESULTS = {}


def record(num, ok, detail):
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[num] = line
    print(line)
    assert ok, line


def lasso7():
    data, _ = generate_synthetic("lasso", seed=7, m=50, q=20, sparsity=0.2, noise=0.1)
    return data, build_lasso(data.features, data.labels, 1.0)


def cli(args):
    return cli_main(args, out=io.StringIO())


# 1 -------------------------------------------------------------------------


def test_criterion_01_prox_contracts():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    fns = [L1Norm(12, 0.8), ZeroFunction(12), ConsensusIndicator(4, 3), PairConsensusIndicator(6, 1),
           SeparableSum([L1Norm(4, 0.2), ZeroFunction(4), L1Norm(4, 2.0)])]
    worst = -np.inf
    for fn in fns:
        for _ in range(1000):
            scale = rng.uniform(0.01, 5.0)
            x = rng.standard_normal(fn.dim) * rng.uniform(0.01, 10)
            z = x + rng.standard_normal(fn.dim) * rng.uniform(1e-3, 10)
            for T in (fn.prox, fn.residual):
                d = T(x, scale) - T(z, scale)
                worst = max(worst, d @ d - d @ (x - z))
    elapsed = time.perf_counter() - t0
    record(1, worst <= 1e-10 and elapsed < 5,
           f"firm nonexpansiveness of prox and I-prox, max violation {worst:.2e} (tol 1e-10), {elapsed:.2f}s (< 5s)")


# 2 -------------------------------------------------------------------------


def test_criterion_02_operator_nonexpansive():
    t0 = time.perf_counter()
    _, prob = lasso7()
    params = validate_params(prob)
    T = as_fixed_point_operator(prob, params)
    ref, _ = solve(prob, params, stop=StoppingRule(tol=1e-12))
    u_star = ref.to_vector()
    rng = np.random.default_rng(99)
    worst, ratio = -np.inf, 0.0
    for i in range(1000):
        # mix of pairs near the solution, near each other, and far apart
        centre = u_star if i % 2 == 0 else rng.standard_normal(60) * 5
        u = centre + rng.standard_normal(60) * 10.0 ** rng.uniform(-4, 1)
        w = u + rng.standard_normal(60) * 10.0 ** rng.uniform(-4, 1)
        lhs, rhs = T.norm(T(u) - T(w)), T.norm(u - w)
        worst = max(worst, lhs - rhs)
        ratio = max(ratio, lhs / rhs)
    elapsed = time.perf_counter() - t0
    record(2, worst <= 1e-10 and elapsed < 10,
           f"||Tu-Tu'||_lam - ||u-u'||_lam max {worst:.2e} (tol 1e-10), max ratio {ratio:.4f}, {elapsed:.2f}s (< 10s)")


# 3 -------------------------------------------------------------------------


def test_criterion_03_centralized_convergence():
    t0 = time.perf_counter()
    data, prob = lasso7()
    ref = lasso_oracle(data.features, data.labels, 1.0)
    params = validate_params(prob)
    state, tr = solve(prob, params, stop=StoppingRule(max_iter=100_000, tol=1e-8))
    T = as_fixed_point_operator(prob, params)
    u = state.to_vector()
    fp = T.norm(T(u) - u)
    gap = abs(prob.objective(state.x) - ref.objective)
    elapsed = time.perf_counter() - t0
    ok = tr.converged and gap <= 1e-6 and fp <= 1e-8 and ref.certificate <= 1e-10 and elapsed < 10
    record(3, ok, f"LASSO seed 7: gap {gap:.2e} (<= 1e-6) after {tr.iterations} iterations, "
                  f"fp residual {fp:.2e} (<= 1e-8), oracle certificate {ref.certificate:.1e}, {elapsed:.2f}s")


# 4 -------------------------------------------------------------------------


def test_criterion_04_reductions(logistic_data):
    _, prob = lasso7()
    params = validate_params(prob)
    a = b = SolverState.zeros(prob)
    err_a = 0.0
    for _ in range(100):
        a, b = spdfp2o_step(a, prob, params), pdfp2o_step(b, prob, params)
        err_a = max(err_a, np.abs(a.to_vector() - b.to_vector()).max())

    data, _ = logistic_data
    rng = np.random.default_rng(4)
    batched = build_batched_logistic(data, partition_dataset(data.m, 3), 0.01)
    mparams = validate_minibatch_params(batched)
    lifted = lift_problem(batched)
    v = rng.standard_normal((3, 50))
    st = MinibatchState(v - v.mean(axis=0), rng.standard_normal((3, 50)), rng.standard_normal((3, 50)))
    us = st.to_solver_state()
    err_b = 0.0
    for _ in range(10):
        st, us = minibatch_step(st, batched, mparams), spdfp2o_step(us, lifted, mparams)
        err_b = max(err_b, np.abs(st.to_solver_state().to_vector() - us.to_vector()).max())

    graph = dist.ring_graph(5)
    nb = build_batched_logistic(data, partition_dataset(data.m, 5), 0.01)
    nparams = dist.validate_network_params(nb, graph)
    nprob = dist.lift_network_problem(nb, graph)
    net = dist.init_network(nb, graph, nparams, x0=rng.standard_normal((5, 50)),
                            y0=rng.standard_normal((5, 50)), v0=rng.standard_normal((5, 2, 50)))
    un = net.to_solver_state()
    err_c = 0.0
    for _ in range(10):
        net, un = dist.sync_round(net, nb, nparams), spdfp2o_step(un, nprob, nparams)
        err_c = max(err_c, np.abs(net.to_solver_state().to_vector() - un.to_vector()).max())
    ok = err_a <= 1e-12 and err_b <= 1e-14 and err_c <= 1e-14
    record(4, ok, f"(a) g=0 vs PDFP2O {err_a:.1e} (<= 1e-12), (b) minibatch vs lifted {err_b:.1e} "
                  f"(<= 1e-14), (c) sync round vs lifted {err_c:.1e} (<= 1e-14)")


# 5 -------------------------------------------------------------------------


def test_criterion_05_mask_equivalences(logistic_data):
    data, _ = logistic_data
    rng = np.random.default_rng(5)
    batched = build_batched_logistic(data, partition_dataset(data.m, 3), 0.01)
    params = validate_minibatch_params(batched, lam=0.4)
    lifted = lift_problem(batched)
    T = BlockOperator(lambda u: spdfp2o_step(SolverState.from_vector(u, lifted), lifted, params).to_vector(),
                      block_partition(3, 50))
    err_sms = 0.0
    for trial in range(10):
        st = MinibatchState(*rng.standard_normal((3, 3, 50)))  # arbitrary v-bar
        zeta = trial % 3
        ref = masked_apply(T, st.to_solver_state().to_vector(), (zeta,))
        out = smspdfp2o_step(st, batched, params, zeta).to_solver_state().to_vector()
        err_sms = max(err_sms, np.abs(out - ref).max())

    graph = dist.ring_graph(5)
    nb = build_batched_logistic(data, partition_dataset(data.m, 5), 0.01)
    nparams = dist.validate_network_params(nb, graph)
    nprob = dist.lift_network_problem(nb, graph)
    Tn = BlockOperator(lambda u: spdfp2o_step(SolverState.from_vector(u, nprob), nprob, nparams).to_vector(),
                       dist.block_partition(graph, 50))
    err_async, bitwise = 0.0, True
    for trial in range(10):
        net = dist.init_network(nb, graph, nparams, x0=rng.standard_normal((5, 50)),
                                y0=rng.standard_normal((5, 50)), v0=rng.standard_normal((5, 2, 50)))
        B = tuple(np.flatnonzero(rng.random(5) < 0.5))
        ref = masked_apply(Tn, net.to_solver_state().to_vector(), B)
        out = dist.async_round(net, nb, nparams, B).to_solver_state().to_vector()
        err_async = max(err_async, np.abs(out - ref).max())
        full = dist.async_round(net, nb, nparams, range(5)).to_solver_state().to_vector()
        sync = dist.sync_round(net, nb, nparams).to_solver_state().to_vector()
        bitwise = bitwise and np.array_equal(full, sync)
    ok = err_sms <= 1e-12 and err_async <= 1e-14 and bitwise
    record(5, ok, f"SMSPDFP2O vs masked T {err_sms:.1e} (<= 1e-12), async(B) vs masked T "
                  f"{err_async:.1e} (<= 1e-14), async(Q) == sync bitwise: {bitwise}")


# 6 -------------------------------------------------------------------------


def test_criterion_06_invariants(logistic_data):
    data, _ = logistic_data
    batched = build_batched_logistic(data, partition_dataset(data.m, 4), 0.01)
    params = validate_minibatch_params(batched)
    st = MinibatchState.zeros(batched)
    worst_mean = 0.0
    for _ in range(500):
        st = minibatch_step(st, batched, params)
        worst_mean = max(worst_mean, np.abs(st.mean_v).max())

    rng = np.random.default_rng(6)
    worst_anti = 0.0
    for graph in (dist.ring_graph(5), dist.star_graph(5), dist.erdos_renyi_graph(6, 0.5, seed=1)):
        nb = build_batched_logistic(data, partition_dataset(data.m, graph.n_nodes), 0.01)
        nparams = dist.validate_network_params(nb, graph)
        net = dist.init_network(nb, graph, nparams, x0=rng.standard_normal((graph.n_nodes, 50)),
                                v0=rng.standard_normal((graph.n_edges, 2, 50)) * 10)
        for _ in range(50):
            net = dist.sync_round(net, nb, nparams)
            worst_anti = max(worst_anti, net.antisymmetry_gap())
    ok = worst_mean <= 1e-12 and worst_anti <= 1e-12
    record(6, ok, f"mean dual over 500 minibatch steps {worst_mean:.1e} (<= 1e-12), edge-dual "
                  f"antisymmetry after sync rounds {worst_anti:.1e} (<= 1e-12)")


# 7 -------------------------------------------------------------------------

SEEDS = (1, 2, 3, 4, 5)


def test_criterion_07_stochastic_convergence():
    lines, ok = [], True
    for seed in SEEDS:
        data, _ = generate_synthetic("logistic", seed=seed, m=200, q=50, sparsity=0.2, noise=0.1)
        ref = logistic_oracle(data.features, data.labels, 0.01)

        t0 = time.perf_counter()
        batched = build_batched_logistic(data, partition_dataset(data.m, 3), 0.01)
        st, tr = run_stochastic(batched, validate_minibatch_params(batched),
                                sampler=CoordinateSampler(3, "single", seed=seed))
        t_sms = time.perf_counter() - t0
        gap = abs(batched.objective(st.mean_x) - ref.objective) / abs(ref.objective)
        cons = st.consensus_residual()
        ok &= tr.converged and gap <= 1e-4 and cons <= 1e-4 and t_sms < 60
        lines.append(f"sms s{seed} gap {gap:.1e} cons {cons:.1e} {t_sms:.1f}s")

        t0 = time.perf_counter()
        graph = dist.ring_graph(5)
        nb = build_batched_logistic(data, partition_dataset(data.m, 5), 0.01)
        nparams = dist.validate_network_params(nb, graph)
        net, tr = dist.run_async(dist.init_network(nb, graph, nparams), nb, nparams,
                                 CoordinateSampler(5, "single", seed=seed))
        t_async = time.perf_counter() - t0
        gap = abs(nb.objective(net.mean_x) - ref.objective) / abs(ref.objective)
        cons = net.consensus_residual()
        ok &= tr.converged and gap <= 1e-4 and cons <= 1e-4 and t_async < 60
        lines.append(f"async s{seed} gap {gap:.1e} cons {cons:.1e} {t_async:.1f}s")
    record(7, ok, "relative gap and consensus <= 1e-4, < 60s per run: " + "; ".join(lines))


# 8 -------------------------------------------------------------------------


def _fd_rel(fun, x, h=1e-6):
    g = fun(x)[1]
    fd = np.array([(fun(x + h * e)[0] - fun(x - h * e)[0]) / (2 * h) for e in np.eye(len(x))])
    return np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12)


def test_criterion_08_numerical_oracles(logistic_data):
    data, _ = logistic_data
    rng = np.random.default_rng(8)
    A, b = rng.standard_normal((40, 15)), rng.standard_normal(40)
    part = partition_dataset(data.m, 3)
    batched = build_batched_logistic(data, part, 0.01)
    blasso = build_batched_lasso(A, b, partition_dataset(40, 3), 1.0)
    grad_err = 0.0
    for _ in range(20):
        x = rng.standard_normal(data.q) * 0.5
        grad_err = max(grad_err, _fd_rel(lambda z: logistic_value_grad(z, data), x))
        grad_err = max(grad_err, _fd_rel(lambda z: (batched.fs[1].value(z), batched.fs[1].grad(z)), x))
        y = rng.standard_normal(15)
        grad_err = max(grad_err, _fd_rel(lambda z: quadratic_value_grad(z, A, b), y))
        grad_err = max(grad_err, _fd_rel(lambda z: (blasso.fs[2].value(z), blasso.fs[2].grad(z)), y))

    mat_err = 0.0
    for k in range(10):
        M = rng.standard_normal((rng.integers(5, 60), rng.integers(5, 40)))
        exact = np.linalg.eigvalsh(M @ M.T)[-1]
        mat_err = max(mat_err, abs(power_iteration_opnorm(matrix_map(M), seed=k) - exact) / exact)
    graphs = [dist.ring_graph(6), dist.star_graph(5), dist.complete_graph(5), dist.path_graph(5),
              dist.erdos_renyi_graph(8, 0.4, seed=2)]
    graph_err = max(abs(power_iteration_opnorm(dist.build_edge_operator(g, 3)) - g.max_degree) / g.max_degree
                    for g in graphs)
    ok = grad_err <= 1e-6 and mat_err <= 1e-6 and graph_err <= 1e-6
    record(8, ok, f"gradient vs central differences {grad_err:.1e}, power iteration vs eigvalsh "
                  f"{mat_err:.1e} (10 matrices), graphs vs max degree {graph_err:.1e} (5 graphs); all <= 1e-6")


# 9 -------------------------------------------------------------------------


def test_criterion_09_bound_enforcement(capsys):
    base = ["--gen", "lasso", "--p", "50", "--q", "20", "--seed", "7", "--max-iters", "50"]
    logi = ["--gen", "logistic", "--m", "60", "--q", "10", "--seed", "1", "--max-iters", "50"]
    _, prob = lasso7()
    beta = prob.f.beta
    exact_lam = validate_params(prob).lam  # 1/(estimate*(1+1e-6)+1)
    cases = [
        ("gamma = 2 beta", ["solve", "--algo", "spdfp2o", *base, "--gamma", repr(2 * beta)], 1, "2*beta"),
        ("gamma < 0", ["solve", "--algo", "spdfp2o", *base, "--gamma", "-0.001"], 1, "2*beta"),
        ("lambda over 1/(opnorm+1)", ["solve", "--algo", "spdfp2o", *base, "--lambda", "0.6"], 1, "1/(opnorm+1)"),
        ("minibatch lambda 0.9", ["solve", "--algo", "minibatch", *base, "--batches", "3", "--lambda", "0.9"], 1, "0.5"),
        ("minibatch lambda 0.5000001", ["solve", "--algo", "smspdfp2o", *base, "--batches", "3", "--lambda", "0.5000001"], 1, "0.5"),
        ("ring lambda 0.34", ["solve", "--algo", "dist-sync", *logi, "--graph", "ring:5", "--lambda", "0.34"], 1, "1/(opnorm+1)"),
        ("spdfp2o lambda at bound", ["solve", "--algo", "spdfp2o", *base, "--lambda", repr(exact_lam)], None, ""),
        ("minibatch lambda 0.5", ["solve", "--algo", "minibatch", *base, "--batches", "3", "--lambda", "0.5"], None, ""),
        ("ring lambda 1/3", ["solve", "--algo", "dist-sync", *logi, "--graph", "ring:5", "--lambda", repr(1 / 3)], None, ""),
    ]
    bad = []
    for name, args, want, needle in cases:
        code = cli(args)
        err = capsys.readouterr().err
        if want == 1:
            if code != 1 or needle not in err:
                bad.append(f"{name}: exit {code}, stderr {err.strip()!r}")
        elif code == 1:
            bad.append(f"{name}: rejected ({err.strip()})")
    record(9, not bad, f"{len(cases)} configurations, violations exit 1 naming the bound, "
                       f"values at the bound accepted" + ("" if not bad else "; problems: " + "; ".join(bad)))


# 10 ------------------------------------------------------------------------


def _strip_time(path):
    return [",".join(row.split(",")[:1] + row.split(",")[2:]) for row in path.read_text().splitlines()]


def test_criterion_10_reproducibility(tmp_path):
    configs = {
        "spdfp2o": ["--algo", "spdfp2o", "--gen", "lasso", "--p", "50", "--q", "20", "--seed", "7"],
        "smspdfp2o": ["--algo", "smspdfp2o", "--gen", "logistic", "--m", "200", "--q", "50",
                      "--seed", "3", "--batches", "3", "--partition", "seeded-random"],
        "dist-async": ["--algo", "dist-async", "--gen", "logistic", "--m", "100", "--q", "20",
                       "--seed", "4", "--graph", "er:6:0.5", "--sampler", "independent:0.4",
                       "--max-iters", "3000"],
    }
    same = {}
    for name, args in configs.items():
        paths = [tmp_path / f"{name}-{i}.csv" for i in range(2)]
        for p in paths:
            cli(["solve", *args, "--trace", str(p)])
        a, b = (_strip_time(p) for p in paths)
        same[name] = a == b and len(a) > 1
    record(10, all(same.values()), "traces identical apart from time_s: "
           + ", ".join(f"{k} {'yes' if v else 'no'}" for k, v in same.items()))
