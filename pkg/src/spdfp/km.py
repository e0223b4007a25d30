"""Randomized Krasnosel'skii-Mann iteration with block masking.

A :class:`BlockOperator` is a map ``T`` on flat vectors together with a
partition of the coordinates into blocks ``V_1 x ... x V_J``. At every step a
:class:`CoordinateSampler` draws the subset of blocks that are refreshed from
``T``; all other blocks keep their value.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError, ParameterError
from .trace import IterationTrace, TraceRecord


class BlockOperator:
    """Operator ``T`` with a coordinate partition and a weighted Euclidean norm.

    Parameters
    ----------
    apply : callable
        The full map ``x -> T(x)`` on flat float arrays.
    blocks : sequence of index arrays
        Disjoint index sets covering ``range(dim)``.
    weights : array, optional
        Nonnegative per-coordinate weights; the norm is ``sqrt(sum w_i u_i^2)``.
        Plain Euclidean when omitted.
    """

    def __init__(self, apply: Callable, blocks: Sequence, weights=None):
        self.apply = apply
        self.blocks = [np.asarray(b, dtype=np.intp) for b in blocks]
        self.dim = int(sum(len(b) for b in self.blocks))
        covered = np.concatenate(self.blocks) if self.blocks else np.empty(0, dtype=np.intp)
        if len(np.unique(covered)) != self.dim or (self.dim and covered.max() != self.dim - 1):
            raise ParameterError("blocks must partition the coordinate range")
        self.weights = None if weights is None else np.asarray(weights, dtype=float)

    @property
    def n_blocks(self):
        return len(self.blocks)

    def __call__(self, x):
        return self.apply(x)

    def apply_block(self, x, j):
        return self.apply(x)[self.blocks[j]]

    def norm(self, u):
        u = np.ravel(u)
        if self.weights is None:
            return float(np.sqrt(u @ u))
        return float(np.sqrt(u @ (self.weights * u)))


def _check_kappa(T, kappa):
    kappa = tuple(kappa)
    for j in kappa:
        if not 0 <= j < T.n_blocks:
            raise ParameterError(f"block index {j} out of range for {T.n_blocks} blocks")
    return kappa


def _mask(T, x, Tx, kappa):
    out = np.array(x, dtype=float, copy=True)
    for j in kappa:
        idx = T.blocks[j]
        out[idx] = Tx[idx]
    return out


def masked_apply(T: BlockOperator, x, kappa):
    """Blocks in ``kappa`` take ``T(x)``'s value, the rest keep ``x``'s."""
    kappa = _check_kappa(T, kappa)
    if len(kappa) == T.n_blocks:
        return T(x)
    if not kappa:
        return np.array(x, dtype=float, copy=True)
    return _mask(T, x, T(x), kappa)


def km_step(T: BlockOperator, x, beta):
    """``x + beta (T x - x)``; ``beta == 1`` returns ``T x`` exactly."""
    if not 0 < beta <= 1:
        raise ParameterError(f"relaxation must lie in (0, 1], got {beta}")
    Tx = T(x)
    if beta == 1:
        return Tx
    return x + beta * (Tx - x)


def fixed_point_residual(T: BlockOperator, x):
    """``||T x - x||`` in the operator's norm."""
    return T.norm(T(x) - x)


class CoordinateSampler:
    """Seeded i.i.d. draws of block subsets.

    Modes
    -----
    ``"single"``
        One block per draw, with probabilities ``probs`` (uniform by default).
    ``"independent"``
        Each block enters independently with probability ``probs[j]``
        (a scalar applies to every block); draws may be empty.
    ``"full"``
        Every block, every time.

    Every block must be reachable with positive probability.
    """

    MODES = ("single", "independent", "full")

    def __init__(self, n_blocks, mode="single", probs=None, seed=0):
        if n_blocks < 1:
            raise ParameterError("sampler needs at least one block")
        if mode not in self.MODES:
            raise ParameterError(f"unknown sampler mode {mode!r}; expected one of {self.MODES}")
        self.n_blocks = int(n_blocks)
        self.mode = mode
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        if mode == "single":
            p = np.full(n_blocks, 1.0) if probs is None else np.asarray(probs, dtype=float)
            if p.shape != (n_blocks,) or np.any(p < 0) or p.sum() <= 0:
                raise ParameterError("single-mode weights must be a nonnegative vector per block")
            p = p / p.sum()
        elif mode == "independent":
            if probs is None:
                raise ParameterError("independent mode needs inclusion probabilities")
            p = np.broadcast_to(np.asarray(probs, dtype=float), (n_blocks,)).copy()
            if np.any(p < 0) or np.any(p > 1):
                raise ParameterError("inclusion probabilities must lie in [0, 1]")
        else:
            p = np.ones(n_blocks)
        starved = np.flatnonzero(p <= 0)
        if starved.size:
            raise ConfigurationError(
                f"blocks {starved.tolist()} are never selected; every block needs positive probability"
            )
        self.probs = p

    def sample(self):
        if self.mode == "full":
            return tuple(range(self.n_blocks))
        if self.mode == "single":
            return (int(self.rng.choice(self.n_blocks, p=self.probs)),)
        hits = self.rng.random(self.n_blocks) < self.probs
        return tuple(int(j) for j in np.flatnonzero(hits))


class RelaxationSchedule:
    """Relaxation sequence ``k -> beta_k`` in ``(0, 1]``.

    ``beta_k = 1`` (the default) writes ``T``'s output straight into the
    selected blocks. ``RelaxationSchedule(0.5)`` is the averaged variant.
    """

    def __init__(self, beta=1.0):
        self._fn = beta if callable(beta) else None
        if self._fn is None and not 0 < beta <= 1:
            raise ParameterError(f"relaxation must lie in (0, 1], got {beta}")
        self.beta = None if self._fn else float(beta)

    def __call__(self, k):
        b = self._fn(k) if self._fn else self.beta
        if not 0 < b <= 1:
            raise ParameterError(f"relaxation beta_{k} = {b} outside (0, 1]")
        return b


@dataclass(frozen=True)
class StoppingRule:
    """Stop once the fixed-point residual is ``<= tol`` or after ``max_iter`` steps.

    ``check_every`` sets how often expensive residuals are evaluated by
    stochastic drivers; ``log_every`` thins trace records.
    """

    max_iter: int = 100_000
    tol: float = 1e-8
    check_every: int = 1
    log_every: int = 1

    def __post_init__(self):
        if self.max_iter < 0:
            raise ParameterError("max_iter must be nonnegative")
        if self.tol < 0:
            raise ParameterError("tol must be nonnegative")
        if self.check_every < 1 or self.log_every < 1:
            raise ParameterError("check_every and log_every must be >= 1")


def randomized_km_run(T: BlockOperator, x0, sampler: CoordinateSampler,
                      schedule: Optional[RelaxationSchedule] = None,
                      stop: Optional[StoppingRule] = None, objective=None):
    """Iterate ``x <- x + beta_k (T^zeta x - x)`` with ``zeta`` drawn by ``sampler``.

    The record for iteration ``k`` holds ``||T x^k - x^k||``, which comes for
    free since the masked update evaluates ``T x^k`` anyway.
    """
    if sampler.n_blocks != T.n_blocks:
        raise ConfigurationError(
            f"sampler draws from {sampler.n_blocks} blocks but the operator has {T.n_blocks}"
        )
    schedule = schedule or RelaxationSchedule()
    stop = stop or StoppingRule()
    x = np.array(x0, dtype=float, copy=True)
    trace = IterationTrace()
    t0 = time.perf_counter()
    for k in range(stop.max_iter):
        Tx = T(x)
        res = T.norm(Tx - x)
        kappa = sampler.sample()
        if k % stop.log_every == 0:
            trace.append(TraceRecord(
                iter=k, time_s=time.perf_counter() - t0,
                objective=objective(x) if objective else float("nan"),
                fp_residual=res, active_set=kappa,
            ))
        if res <= stop.tol:
            trace.converged = True
            break
        beta = schedule(k)
        target = Tx if len(kappa) == T.n_blocks else _mask(T, x, Tx, kappa)
        x = target if beta == 1 else x + beta * (target - x)
        trace.iterations = k + 1
    return x, trace
