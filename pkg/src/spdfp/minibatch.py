"""Minibatch and stochastic-minibatch splitting for ``min sum_n f_n(x) + g_n(x)``.

Every batch keeps its own replica ``x_n`` with duals ``(v_n, y_n)``; the
replicas are tied together by the indicator of the consensus set on
``X^N``. With ``D = I`` on ``X^N`` the lifted problem has
``lambda_max(D D^T) = 1``, so the dual step is bounded by ``1/2``.

Batch indices are 0-based.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError, ParameterError, ShapeError
from .km import CoordinateSampler, StoppingRule
from .operators import identity_map
from .prox import ConsensusIndicator, ProxFn, SeparableSum, SmoothFn, separable_smooth
from .solvers import CompositeProblem, PdfpParams, SolverState, validate_params
from .trace import IterationTrace, TraceRecord

# lambda_max(D D^T) of the lifted problem (D is the identity on X^N)
LIFTED_OPNORM = 1.0

# v-bar must vanish in Algorithm-2 mode; checked relative to the dual magnitude
MEAN_DUAL_TOL = 1e-9


class BatchedProblem:
    """Per-batch terms ``(f_n, g_n)`` on a shared space of dimension ``q``.

    All batches share one Lipschitz bound ``L`` (``beta = 1/L``), the largest
    of the per-batch constants unless given explicitly.
    """

    def __init__(self, fs: Sequence[SmoothFn], gs: Sequence[ProxFn], lipschitz=None):
        if len(fs) < 1 or len(fs) != len(gs):
            raise ParameterError("need N >= 1 batches with one f_n and one g_n each")
        dims = {f.dim for f in fs} | {g.dim for g in gs}
        if len(dims) != 1:
            raise ShapeError(f"all batch terms must act on one dimension, got {sorted(dims)}")
        self.fs = list(fs)
        self.gs = list(gs)
        self.dim = dims.pop()
        self.lipschitz = float(lipschitz) if lipschitz is not None else max(f.lipschitz for f in fs)

    @property
    def n_batches(self):
        return len(self.fs)

    @property
    def beta(self):
        return 1.0 / self.lipschitz

    def objective(self, x):
        """``sum_n f_n(x) + g_n(x)`` at a common point."""
        return float(sum(f.value(x) + g.value(x) for f, g in zip(self.fs, self.gs)))

    def replica_objective(self, xs):
        """``sum_n f_n(x_n) + g_n(x_n)`` without the consensus indicator."""
        return float(sum(f.value(xn) + g.value(xn) for f, g, xn in zip(self.fs, self.gs, xs)))

    def gradients(self, xs, which=None):
        idx = range(self.n_batches) if which is None else which
        return np.stack([self.fs[n].grad(xs[n]) for n in idx])


@dataclass(frozen=True)
class MinibatchState:
    """Per-batch ``(v_n, y_n, x_n)`` stored as ``(N, q)`` arrays."""

    v: np.ndarray
    y: np.ndarray
    x: np.ndarray

    @classmethod
    def zeros(cls, batched: BatchedProblem):
        shape = (batched.n_batches, batched.dim)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_solver_state(cls, state: SolverState, n_batches):
        return cls(*(np.reshape(a, (n_batches, -1)).copy() for a in (state.v, state.y, state.x)))

    def to_solver_state(self):
        return SolverState(self.v.ravel().copy(), self.y.ravel().copy(), self.x.ravel().copy())

    @property
    def mean_x(self):
        return self.x.mean(axis=0)

    @property
    def mean_v(self):
        return self.v.mean(axis=0)

    def consensus_residual(self):
        return float(np.linalg.norm(self.x - self.mean_x, axis=1).max())


def lift_problem(batched: BatchedProblem) -> CompositeProblem:
    """Product-space problem with ``f = sum f_n(x_n)``, ``g = sum g_n(x_n)``, ``h`` the consensus indicator, ``D = I``."""
    n, q = batched.n_batches, batched.dim
    return CompositeProblem(
        f=separable_smooth(batched.fs, lipschitz=batched.lipschitz),
        g=SeparableSum(batched.gs),
        h=ConsensusIndicator(n, q),
        D=identity_map(n * q),
    )


def validate_minibatch_params(batched: BatchedProblem, gamma="auto", lam="auto"):
    """Enforce ``0 < gamma < 2 beta`` and ``0 < lam <= 1/2``."""
    return validate_params(lift_problem(batched), gamma=gamma, lam=lam, opnorm=LIFTED_OPNORM)


def block_partition(n_batches, dim):
    """Index blocks ``S_n = (v_n, y_n, x_n)`` of the flat lifted ``(v, y, x)`` vector."""
    size = n_batches * dim
    blocks = []
    for n in range(n_batches):
        local = np.arange(n * dim, (n + 1) * dim)
        blocks.append(np.concatenate([local, size + local, 2 * size + local]))
    return blocks


def aggregate_s(state: MinibatchState, batched: BatchedProblem, gamma, lam, grads=None):
    """``(1/N) sum_n (x_n - gamma grad f_n(x_n) - lam y_n)``."""
    if grads is None:
        grads = batched.gradients(state.x)
    return (state.x - gamma * grads - lam * state.y).mean(axis=0)


def minibatch_step(state: MinibatchState, batched: BatchedProblem, params: PdfpParams, grads=None):
    """One synchronous minibatch step over all batches.

    Requires the mean dual ``v-bar`` to be zero, which the update then
    preserves.
    """
    gamma, lam = params.gamma, params.lam
    scale = 1.0 + float(np.abs(state.v).max(initial=0.0))
    if np.abs(state.mean_v).max(initial=0.0) > MEAN_DUAL_TOL * scale:
        raise ConfigurationError(
            "minibatch_step needs sum_n v_n = 0; use smspdfp2o_step for arbitrary duals"
        )
    if grads is None:
        grads = batched.gradients(state.x)
    xh = state.x - gamma * grads
    s = (xh - lam * state.y).mean(axis=0)
    v_new = xh + (1.0 - lam) * state.v - lam * state.y - s
    y_arg = xh + (1.0 - lam) * state.y - lam * state.v
    y_new = np.stack([g.residual(a, gamma / lam) for g, a in zip(batched.gs, y_arg)])
    x_new = xh - lam * v_new - lam * y_new
    return MinibatchState(v_new, y_new, x_new)


def _partial_update(state, batched, params, active, grads):
    """Refresh the batches in ``active`` from the lifted operator; keep the others.

    The subtracted aggregate is the consensus mean of
    ``x_n - gamma grad f_n + (1 - lam) v_n - lam y_n``, i.e.
    ``s + (1 - lam) v-bar``.
    """
    gamma, lam = params.gamma, params.lam
    xh = state.x - gamma * grads
    agg = (xh - lam * state.y).mean(axis=0) + (1.0 - lam) * state.v.mean(axis=0)
    v_new, y_new, x_new = state.v.copy(), state.y.copy(), state.x.copy()
    for n in active:
        vn = xh[n] + (1.0 - lam) * state.v[n] - lam * state.y[n] - agg
        yn = batched.gs[n].residual(xh[n] + (1.0 - lam) * state.y[n] - lam * state.v[n], gamma / lam)
        v_new[n] = vn
        y_new[n] = yn
        x_new[n] = xh[n] - lam * vn - lam * yn
    return MinibatchState(v_new, y_new, x_new)


def smspdfp2o_step(state: MinibatchState, batched: BatchedProblem, params: PdfpParams, zeta,
                   grads=None):
    """Update batch ``zeta`` only (an int, or an iterable of batch indices).

    Aggregates are taken over all batches from the current state; the other
    batches are carried over unchanged.
    """
    active = (zeta,) if np.isscalar(zeta) else tuple(zeta)
    for n in active:
        if not 0 <= n < batched.n_batches:
            raise ParameterError(f"batch index {n} outside 0..{batched.n_batches - 1}")
    if grads is None:
        grads = batched.gradients(state.x)
    return _partial_update(state, batched, params, active, grads)


def _distance(a: MinibatchState, b: MinibatchState, lam):
    dv, dy, dx = a.v - b.v, a.y - b.y, a.x - b.x
    return float(np.sqrt(np.vdot(dx, dx) + lam * (np.vdot(dv, dv) + np.vdot(dy, dy))))


class _IncrementalAggregates:
    """Running sums for ``s`` and ``v-bar``, adjusted only for the batches that moved."""

    def __init__(self, state, grads, gamma, lam):
        self.gamma, self.lam = gamma, lam
        self.terms = state.x - gamma * grads - lam * state.y
        self.term_sum = self.terms.sum(axis=0)
        self.v_sum = state.v.sum(axis=0)

    def update(self, old, new, grads, active):
        for n in active:
            term = new.x[n] - self.gamma * grads[n] - self.lam * new.y[n]
            self.term_sum += term - self.terms[n]
            self.terms[n] = term
            self.v_sum += new.v[n] - old.v[n]

    def aggregate(self, n_batches):
        return (self.term_sum + (1.0 - self.lam) * self.v_sum) / n_batches


def run_stochastic(batched: BatchedProblem, params: PdfpParams,
                   init: Optional[MinibatchState] = None,
                   sampler: Optional[CoordinateSampler] = None,
                   stop: Optional[StoppingRule] = None, incremental=False):
    """Run SMSPDFP2O: sample batches, update them, repeat.

    Gradients of untouched batches are cached across iterations. Every
    ``stop.check_every`` iterations the full fixed-point residual
    ``||T u - u||_lam`` is evaluated and compared with ``stop.tol``. The trace
    records the objective at the replica mean, the consensus residual
    ``max_n ||x_n - x-bar||`` and the sampled batches.

    With ``incremental=True`` the aggregates are maintained as running sums
    instead of being recomputed.
    """
    n = batched.n_batches
    if sampler is None:
        sampler = CoordinateSampler(n, "single", seed=0)
    if sampler.n_blocks != n:
        raise ConfigurationError(f"sampler covers {sampler.n_blocks} blocks, problem has {n} batches")
    stop = stop or StoppingRule(check_every=n)
    state = init if init is not None else MinibatchState.zeros(batched)
    gamma, lam = params.gamma, params.lam
    grads = batched.gradients(state.x)
    agg = _IncrementalAggregates(state, grads, gamma, lam) if incremental else None
    trace = IterationTrace()
    t0 = time.perf_counter()

    def residual(st):
        full = _partial_update(st, batched, params, range(n), grads)
        return _distance(full, st, lam)

    for k in range(stop.max_iter):
        active = sampler.sample()
        if agg is None:
            new = _partial_update(state, batched, params, active, grads)
        else:
            new = _incremental_update(state, batched, params, active, grads, agg.aggregate(n))
        if active:
            grads = grads.copy()
            grads[list(active)] = batched.gradients(new.x, active)
            if agg is not None:
                agg.update(state, new, grads, active)
        state = new
        trace.iterations = k + 1
        check = (k + 1) % stop.check_every == 0 or k + 1 == stop.max_iter
        res = residual(state) if check else None
        done = res is not None and res <= stop.tol
        if k % stop.log_every == 0 or done or k + 1 == stop.max_iter:
            trace.append(TraceRecord(
                iter=k + 1, time_s=time.perf_counter() - t0,
                objective=batched.objective(state.mean_x), fp_residual=res,
                consensus_residual=state.consensus_residual(), active_set=active,
            ))
        if not np.all(np.isfinite(state.x)):
            raise ConfigurationError(f"non-finite iterate at iteration {k + 1}; check step sizes")
        if done:
            trace.converged = True
            break
    return state, trace


def _incremental_update(state, batched, params, active, grads, aggregate):
    gamma, lam = params.gamma, params.lam
    v_new, y_new, x_new = state.v.copy(), state.y.copy(), state.x.copy()
    for n in active:
        xh = state.x[n] - gamma * grads[n]
        vn = xh + (1.0 - lam) * state.v[n] - lam * state.y[n] - aggregate
        yn = batched.gs[n].residual(xh + (1.0 - lam) * state.y[n] - lam * state.v[n], gamma / lam)
        v_new[n], y_new[n] = vn, yn
        x_new[n] = xh - lam * vn - lam * yn
    return MinibatchState(v_new, y_new, x_new)
