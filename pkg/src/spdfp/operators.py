"""Linear maps with explicit adjoints, and power iteration for ``lambda_max(D D^T)``."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ConvergenceError, ParameterError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearMap:
    """``D : R^in_dim -> R^out_dim`` given by forward and adjoint callables."""

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    in_dim: int
    out_dim: int

    def gram(self, v):
        """``D D^T v`` as two applications; ``D D^T`` is never formed."""
        return self.apply(self.adjoint(v))

    def check_input(self, x):
        if np.shape(x) != (self.in_dim,):
            raise ShapeError(f"expected input of shape ({self.in_dim},), got {np.shape(x)}")

    def check_output(self, y):
        if np.shape(y) != (self.out_dim,):
            raise ShapeError(f"expected output-space vector of shape ({self.out_dim},), got {np.shape(y)}")


def identity_map(dim):
    def ident(x):
        return np.asarray(x, dtype=float)

    return LinearMap(apply=ident, adjoint=ident, in_dim=dim, out_dim=dim)


def matrix_map(A):
    """Wrap a dense or scipy.sparse matrix."""
    out_dim, in_dim = A.shape
    AT = A.T
    return LinearMap(
        apply=lambda x: np.asarray(A @ x, dtype=float).ravel(),
        adjoint=lambda y: np.asarray(AT @ y, dtype=float).ravel(),
        in_dim=in_dim,
        out_dim=out_dim,
    )


def stack_maps(*maps):
    """Vertical stack ``x -> (D_1 x, ..., D_k x)``."""
    in_dims = {m.in_dim for m in maps}
    if len(in_dims) != 1:
        raise ShapeError("stacked maps must share the input dimension")
    splits = np.cumsum([m.out_dim for m in maps])[:-1]

    def apply(x):
        return np.concatenate([m.apply(x) for m in maps])

    def adjoint(y):
        parts = np.split(np.asarray(y, dtype=float), splits)
        out = maps[0].adjoint(parts[0])
        for m, p in zip(maps[1:], parts[1:]):
            out = out + m.adjoint(p)
        return out

    return LinearMap(apply=apply, adjoint=adjoint, in_dim=in_dims.pop(),
                     out_dim=int(sum(m.out_dim for m in maps)))


def power_iteration_opnorm(D: LinearMap, tol=1e-12, max_iter=10_000, seed=0):
    """Estimate ``lambda_max(D D^T)`` by power iteration on ``D^T D``.

    Both products share their nonzero spectrum, and iterating on the input
    side is cheaper whenever ``in_dim <= out_dim``. Stops once the relative
    change of the Rayleigh quotient ``||Dx||^2 / ||x||^2`` drops below ``tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` is exhausted; the last estimate is attached.
    """
    if tol <= 0 or max_iter < 1:
        raise ParameterError("power iteration needs tol > 0 and max_iter >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(D.in_dim)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for it in range(1, max_iter + 1):
        Dx = D.apply(x)
        rayleigh = float(Dx @ Dx)
        if it > 1 and abs(rayleigh - estimate) <= tol * rayleigh:
            logger.debug("power iteration converged after %d iterations", it)
            return rayleigh
        estimate = rayleigh
        z = D.adjoint(Dx)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            if it == 1:
                raise ParameterError("operator is zero on the starting vector")
            return 0.0
        x = z / nz
    raise ConvergenceError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations "
        f"(last estimate {estimate!r})",
        estimate=estimate,
    )
