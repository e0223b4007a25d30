"""Centralized primal-dual fixed-point solvers for ``min f + g + h o D``.

``pdfp2o_step`` handles ``g = 0``; ``spdfp2o_step`` splits off ``g`` with an
auxiliary dual ``y``, which amounts to running the two-block scheme on the
stacked operator ``(D, I)``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError, DivergenceError, ModeError, ShapeError
from .km import BlockOperator, StoppingRule
from .operators import LinearMap, power_iteration_opnorm
from .prox import ProxFn, SmoothFn, is_zero_function
from .trace import IterationTrace, TraceRecord

# relative inflation of power-iteration estimates before they enter the lambda bound
OPNORM_SAFETY = 1e-6

METHODS = ("pdfp2o", "spdfp2o")


@dataclass(frozen=True)
class CompositeProblem:
    f: SmoothFn
    g: ProxFn
    h: ProxFn
    D: LinearMap

    def __post_init__(self):
        if self.f.dim != self.D.in_dim or self.g.dim != self.D.in_dim:
            raise ShapeError(
                f"f, g act on dims {self.f.dim}, {self.g.dim} but D expects {self.D.in_dim}"
            )
        if self.h.dim != self.D.out_dim:
            raise ShapeError(f"h acts on dim {self.h.dim} but D maps into {self.D.out_dim}")

    @property
    def dim(self):
        return self.D.in_dim

    def objective(self, x):
        return self.f.value(x) + self.g.value(x) + self.h.value(self.D.apply(x))


@dataclass(frozen=True)
class SolverState:
    """Iterate ``(v, y, x)``: dual for ``h``, dual for ``g``, primal."""

    v: np.ndarray
    y: np.ndarray
    x: np.ndarray

    @classmethod
    def zeros(cls, problem: CompositeProblem):
        return cls(np.zeros(problem.D.out_dim), np.zeros(problem.dim), np.zeros(problem.dim))

    @classmethod
    def from_vector(cls, u, problem: CompositeProblem):
        p, q = problem.D.out_dim, problem.dim
        return cls(u[:p].copy(), u[p:p + q].copy(), u[p + q:].copy())

    def to_vector(self):
        return np.concatenate([self.v, self.y, self.x])

    def check(self, problem: CompositeProblem):
        problem.D.check_output(self.v)
        problem.D.check_input(self.y)
        problem.D.check_input(self.x)


@dataclass(frozen=True)
class PdfpParams:
    """Primal step ``gamma``, dual step ``lam`` and the ``lambda_max(D D^T)`` used for its bound."""

    gamma: float
    lam: float
    opnorm: float
    method: str = "spdfp2o"

    @property
    def lam_bound(self):
        return lam_bound(self.opnorm, self.method)


def lam_bound(opnorm, method="spdfp2o"):
    if method == "pdfp2o":
        return 1.0 / opnorm
    return 1.0 / (opnorm + 1.0)


def validate_params(problem: CompositeProblem, gamma="auto", lam="auto", opnorm=None,
                    method="spdfp2o", seed=0):
    """Resolve ``"auto"`` steps and enforce ``0 < gamma < 2 beta``, ``0 < lam <= bound``.

    ``opnorm`` is ``lambda_max(D D^T)``. When omitted it is estimated by
    power iteration and inflated by a relative ``1e-6`` so that an
    underestimate cannot push ``lam`` past the true bound. The bound is
    ``1/opnorm`` for PDFP2O and ``1/(opnorm + 1)`` for SPDFP2O.
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")
    if opnorm is None:
        opnorm = power_iteration_opnorm(problem.D, seed=seed) * (1.0 + OPNORM_SAFETY)
    opnorm = float(opnorm)
    if not opnorm > 0:
        raise ConfigurationError(f"opnorm must be positive, got {opnorm}")
    beta = problem.f.beta
    if gamma == "auto":
        gamma = beta
    gamma = float(gamma)
    if not 0 < gamma < 2 * beta:
        raise ConfigurationError(
            f"gamma {gamma!r} violates 0 < gamma < 2*beta = {2 * beta!r} (beta = 1/L)"
        )
    bound = lam_bound(opnorm, method)
    formula = "1/opnorm" if method == "pdfp2o" else "1/(opnorm+1)"
    if lam == "auto":
        lam = bound
    lam = float(lam)
    if not lam > 0:
        raise ConfigurationError(f"lambda {lam!r} must be positive")
    if lam > bound:
        raise ConfigurationError(f"lambda {lam!r} exceeds bound {bound!r} = {formula}")
    return PdfpParams(gamma=gamma, lam=lam, opnorm=opnorm, method=method)


def pdfp2o_step(state: SolverState, problem: CompositeProblem, params: PdfpParams):
    """One PDFP2O step; requires ``g = 0``."""
    if not is_zero_function(problem.g):
        raise ModeError("pdfp2o handles f + h o D only; use spdfp2o_step when g is nonzero")
    gamma, lam, D = params.gamma, params.lam, problem.D
    x, v = state.x, state.v
    xh = x - gamma * problem.f.grad(x)
    w = D.apply(xh - lam * D.adjoint(v)) + v
    v_new = problem.h.residual(w, gamma / lam)
    x_new = xh - lam * D.adjoint(v_new)
    return SolverState(v=v_new, y=np.zeros_like(x), x=x_new)


def spdfp2o_step(state: SolverState, problem: CompositeProblem, params: PdfpParams):
    """One SPDFP2O step.

    ``v`` and ``y`` are both refreshed from the old state; only the primal
    update reads the new duals.
    """
    gamma, lam, D = params.gamma, params.lam, problem.D
    v, y, x = state.v, state.y, state.x
    if v.shape != (D.out_dim,) or y.shape != (D.in_dim,) or x.shape != (D.in_dim,):
        raise ShapeError("state blocks do not match the problem dimensions")
    xh = x - gamma * problem.f.grad(x)
    Dtv = D.adjoint(v)
    # D x_half + (I - lam D D^T) v - lam D y, with a single application of D
    w = D.apply(xh - lam * Dtv - lam * y) + v
    v_new = problem.h.residual(w, gamma / lam)
    y_new = problem.g.residual(xh + (1.0 - lam) * y - lam * Dtv, gamma / lam)
    x_new = xh - lam * D.adjoint(v_new) - lam * y_new
    return SolverState(v=v_new, y=y_new, x=x_new)


def product_weights(problem: CompositeProblem, lam):
    """Per-coordinate weights of ``||.||_lam`` on the flat ``(v, y, x)`` layout."""
    p, q = problem.D.out_dim, problem.dim
    return np.concatenate([np.full(p + q, lam), np.ones(q)])


def state_distance(a: SolverState, b: SolverState, lam):
    """``||a - b||_lam`` with ``(v, y)`` as the dual block."""
    dv, dy, dx = a.v - b.v, a.y - b.y, a.x - b.x
    return float(np.sqrt(dx @ dx + lam * (dv @ dv + dy @ dy)))


def as_fixed_point_operator(problem: CompositeProblem, params: PdfpParams, blocks=None):
    """Expose one SPDFP2O step as a :class:`BlockOperator` on flat ``(v, y, x)``.

    Default blocks are the three variables; pass a custom partition to get a
    finer coordinate-descent granularity.
    """
    p, q = problem.D.out_dim, problem.dim

    def apply(u):
        state = SolverState(u[:p], u[p:p + q], u[p + q:])
        return spdfp2o_step(state, problem, params).to_vector()

    if blocks is None:
        blocks = [np.arange(p), np.arange(p, p + q), np.arange(p + q, p + 2 * q)]
    return BlockOperator(apply, blocks, weights=product_weights(problem, params.lam))


def solve(problem: CompositeProblem, params: PdfpParams, init: Optional[SolverState] = None,
          stop: Optional[StoppingRule] = None, method=None):
    """Iterate until ``||u^{k+1} - u^k||_lam <= stop.tol`` or ``stop.max_iter`` steps.

    ``method=None`` picks PDFP2O when ``g`` is zero and SPDFP2O otherwise.
    Returns the final state and an :class:`IterationTrace`.
    """
    stop = stop or StoppingRule()
    if method is None:
        method = "pdfp2o" if is_zero_function(problem.g) else "spdfp2o"
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}")
    step = pdfp2o_step if method == "pdfp2o" else spdfp2o_step
    state = init if init is not None else SolverState.zeros(problem)
    state.check(problem)
    lam = params.lam
    origin = SolverState(np.zeros_like(state.v), np.zeros_like(state.y), np.zeros_like(state.x))
    blowup = 1e12 * (1.0 + state_distance(state, origin, 1.0))
    trace = IterationTrace()
    t0 = time.perf_counter()
    for k in range(stop.max_iter):
        new = step(state, problem, params)
        res = state_distance(new, state, lam)
        size = state_distance(new, origin, 1.0)
        if not np.isfinite(size) or size > blowup:
            raise DivergenceError(
                f"iterate norm {size:.3e} exceeded {blowup:.3e} at iteration {k + 1}; "
                "check the step-size bounds"
            )
        state = new
        trace.iterations = k + 1
        done = res <= stop.tol
        if k % stop.log_every == 0 or done or k + 1 == stop.max_iter:
            trace.append(TraceRecord(
                iter=k + 1, time_s=time.perf_counter() - t0,
                objective=problem.objective(state.x), fp_residual=res,
            ))
        if done:
            trace.converged = True
            break
    return state, trace
