"""Proximity operators, smooth terms and the primal-dual product norm.

Every prox takes ``(x, scale)`` and returns ``prox_{scale * f}(x)``. The
catalog is deliberately small: the l1 norm, the zero function, and the two
consensus indicators needed by the minibatch and graph formulations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .exceptions import ParameterError, ShapeError

# feasibility tolerance used by indicator ``value`` methods
INDICATOR_TOL = 1e-9


def soft_threshold(x, tau):
    """Componentwise ``sign(x) * max(|x| - tau, 0)``, the prox of ``tau*||.||_1``."""
    if tau < 0:
        raise ParameterError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def project_pair_consensus(a, b):
    """Project ``(a, b)`` onto ``{(z, z)}``: both slots become ``(a + b) / 2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"pair slots differ in shape: {a.shape} vs {b.shape}")
    mid = 0.5 * (a + b)
    return mid, mid.copy()


def project_consensus(blocks):
    """Replace every row of a ``(N, q)`` block array by the row mean."""
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim == 1:
        blocks = blocks[:, None]
    if blocks.shape[0] == 0:
        raise ParameterError("consensus projection needs at least one block")
    mean = blocks.mean(axis=0)
    return np.broadcast_to(mean, blocks.shape).copy()


class ProductPoint(NamedTuple):
    """Point ``(v, x)`` of the dual x primal product space."""

    v: np.ndarray
    x: np.ndarray


def lambda_norm(u, lam):
    """``sqrt(||x||^2 + lam * ||v||^2)`` for ``u = (v, x)``."""
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    v, x = u
    v = np.ravel(v)
    x = np.ravel(x)
    return float(np.sqrt(x @ x + lam * (v @ v)))


# ---------------------------------------------------------------------------
# prox catalog


class ProxFn:
    """Convex function accessed through its proximity operator."""

    dim: int

    def prox(self, x, scale):
        raise NotImplementedError

    def value(self, x):
        raise NotImplementedError

    def residual(self, x, scale):
        """``(I - prox_{scale f})(x)``."""
        return x - self.prox(x, scale)


class ZeroFunction(ProxFn):
    def __init__(self, dim):
        self.dim = int(dim)

    def prox(self, x, scale):
        return np.asarray(x, dtype=float)

    def residual(self, x, scale):
        return np.zeros_like(x, dtype=float)

    def value(self, x):
        return 0.0

    def __repr__(self):
        return f"ZeroFunction(dim={self.dim})"


class L1Norm(ProxFn):
    """``weight * ||x||_1``."""

    def __init__(self, dim, weight=1.0):
        if weight < 0:
            raise ParameterError(f"l1 weight must be nonnegative, got {weight}")
        self.dim = int(dim)
        self.weight = float(weight)

    def prox(self, x, scale):
        return soft_threshold(x, scale * self.weight)

    def value(self, x):
        return self.weight * float(np.abs(x).sum())

    def __repr__(self):
        return f"L1Norm(dim={self.dim}, weight={self.weight})"


class ConsensusIndicator(ProxFn):
    """Indicator of ``{x in X^N : x_1 = ... = x_N}`` on flat vectors of length ``N*q``.

    The scale is ignored since the prox of a scaled indicator is still the
    projection.
    """

    def __init__(self, n_blocks, block_dim):
        if n_blocks < 1:
            raise ParameterError("consensus set needs at least one block")
        self.n_blocks = int(n_blocks)
        self.block_dim = int(block_dim)
        self.dim = self.n_blocks * self.block_dim

    def prox(self, x, scale=1.0):
        blocks = np.reshape(x, (self.n_blocks, self.block_dim))
        return project_consensus(blocks).ravel()

    def value(self, x):
        blocks = np.reshape(x, (self.n_blocks, self.block_dim))
        spread = np.abs(blocks - blocks[0]).max(initial=0.0)
        return 0.0 if spread <= INDICATOR_TOL else np.inf


class PairConsensusIndicator(ProxFn):
    """Sum over pairs of the indicator of ``{(z, z)}``.

    Flat layout is ``(n_pairs, 2, block_dim)``.
    """

    def __init__(self, n_pairs, block_dim):
        self.n_pairs = int(n_pairs)
        self.block_dim = int(block_dim)
        self.dim = 2 * self.n_pairs * self.block_dim

    def prox(self, x, scale=1.0):
        pairs = np.reshape(x, (self.n_pairs, 2, self.block_dim))
        mid = 0.5 * (pairs[:, 0] + pairs[:, 1])
        return np.stack([mid, mid], axis=1).ravel()

    def value(self, x):
        pairs = np.reshape(x, (self.n_pairs, 2, self.block_dim))
        gap = np.abs(pairs[:, 0] - pairs[:, 1]).max(initial=0.0)
        return 0.0 if gap <= INDICATOR_TOL else np.inf


class SeparableSum(ProxFn):
    """``sum_n g_n(x_n)`` over equal-size blocks of a flat vector."""

    def __init__(self, parts: Sequence[ProxFn]):
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise ShapeError(f"separable parts must share one dimension, got {sorted(dims)}")
        self.parts = list(parts)
        self.block_dim = dims.pop()
        self.dim = self.block_dim * len(self.parts)

    def _blocks(self, x):
        return np.reshape(x, (len(self.parts), self.block_dim))

    def prox(self, x, scale):
        return np.concatenate([g.prox(xb, scale) for g, xb in zip(self.parts, self._blocks(x))])

    def value(self, x):
        return float(sum(g.value(xb) for g, xb in zip(self.parts, self._blocks(x))))

    @property
    def is_zero(self):
        return all(isinstance(g, ZeroFunction) for g in self.parts)


def is_zero_function(g):
    return isinstance(g, ZeroFunction) or (isinstance(g, SeparableSum) and g.is_zero)


# ---------------------------------------------------------------------------
# smooth terms


@dataclass(frozen=True)
class SmoothFn:
    """Differentiable convex term with an ``L``-Lipschitz gradient."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    dim: int

    def __post_init__(self):
        if not self.lipschitz > 0:
            raise ParameterError(f"Lipschitz constant must be positive, got {self.lipschitz}")

    @property
    def beta(self):
        return 1.0 / self.lipschitz


def separable_smooth(parts: Sequence[SmoothFn], lipschitz=None):
    """Lift ``f_1, ..., f_N`` to ``f(x) = sum_n f_n(x_n)`` on ``X^N``."""
    q = parts[0].dim
    if any(p.dim != q for p in parts):
        raise ShapeError("all smooth parts must act on the same dimension")
    n = len(parts)

    def value(x):
        xb = np.reshape(x, (n, q))
        return float(sum(f.value(b) for f, b in zip(parts, xb)))

    def grad(x):
        xb = np.reshape(x, (n, q))
        return np.concatenate([f.grad(b) for f, b in zip(parts, xb)])

    if lipschitz is None:
        lipschitz = max(p.lipschitz for p in parts)
    return SmoothFn(value=value, grad=grad, lipschitz=lipschitz, dim=n * q)
