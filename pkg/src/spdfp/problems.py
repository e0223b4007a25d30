"""Concrete instances: LASSO and l1-regularized logistic regression.

Conventions
-----------
* Sample indices are 0-based.
* Classification labels live in ``{-1, +1}``; ``{0, 1}`` inputs are mapped
  with a warning.
* The logistic loss is averaged over the full sample count ``m`` even when a
  batch only sums over its own rows, so batch losses add up to the full loss.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .exceptions import ParameterError, ShapeError
from .minibatch import BatchedProblem
from .operators import identity_map, matrix_map, power_iteration_opnorm
from .prox import L1Norm, SmoothFn, ZeroFunction
from .solvers import CompositeProblem

TASKS = ("regression", "classification")


@dataclass(frozen=True)
class Dataset:
    """``m`` samples of ``q`` features (dense array or CSR matrix) with labels."""

    features: object
    labels: np.ndarray
    task: str = "classification"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ParameterError(f"unknown task {self.task!r}")
        labels = np.asarray(self.labels, dtype=float).ravel()
        if labels.shape[0] != self.features.shape[0]:
            raise ShapeError(f"{labels.shape[0]} labels for {self.features.shape[0]} samples")
        values = self.features.data if sp.issparse(self.features) else np.asarray(self.features)
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(labels)):
            raise ParameterError("dataset contains NaN or Inf entries")
        if self.task == "classification":
            uniq = set(np.unique(labels).tolist())
            if uniq <= {0.0, 1.0} and 0.0 in uniq:
                warnings.warn("mapping {0, 1} labels to {-1, +1}", stacklevel=3)
                labels = 2.0 * labels - 1.0
            elif not uniq <= {-1.0, 1.0}:
                raise ParameterError(f"classification labels must be in {{-1, +1}}, got {sorted(uniq)[:5]}")
        object.__setattr__(self, "labels", labels)
        if not sp.issparse(self.features):
            object.__setattr__(self, "features", np.asarray(self.features, dtype=float))

    @property
    def m(self):
        return self.features.shape[0]

    @property
    def q(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class Partition:
    """Disjoint, covering, nonempty index blocks of ``range(m)``."""

    blocks: tuple
    m: int

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=np.intp) for b in self.blocks)
        if not blocks:
            raise ParameterError("partition needs at least one block")
        if any(len(b) == 0 for b in blocks):
            raise ParameterError("partition blocks must be nonempty")
        joined = np.concatenate(blocks)
        if len(joined) != self.m or not np.array_equal(np.sort(joined), np.arange(self.m)):
            raise ParameterError("partition blocks must be disjoint and cover every sample")
        object.__setattr__(self, "blocks", blocks)

    def __len__(self):
        return len(self.blocks)


def partition_dataset(m, n_blocks, strategy="contiguous", seed=0):
    """Split ``range(m)`` into ``n_blocks`` blocks whose sizes differ by at most one."""
    if not 1 <= n_blocks <= m:
        raise ParameterError(f"need 1 <= N <= m, got N={n_blocks}, m={m}")
    if strategy == "contiguous":
        blocks = np.array_split(np.arange(m), n_blocks)
    elif strategy == "strided":
        blocks = [np.arange(n, m, n_blocks) for n in range(n_blocks)]
    elif strategy == "seeded-random":
        perm = np.random.default_rng(seed).permutation(m)
        blocks = [np.sort(b) for b in np.array_split(perm, n_blocks)]
    else:
        raise ParameterError(f"unknown partition strategy {strategy!r}")
    return Partition(tuple(blocks), m)


def _rows(A, indices):
    if indices is None:
        return A
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= A.shape[0]):
        raise ParameterError(f"sample index out of range 0..{A.shape[0] - 1}")
    return A[idx]


def logistic_value_grad(x, data: Dataset, indices=None):
    """Value and gradient of ``sum_{i in indices} (1/m) log(1 + exp(-y_i a_i^T x))``."""
    A = _rows(data.features, indices)
    y = data.labels if indices is None else data.labels[np.asarray(indices, dtype=np.intp)]
    return _logistic(x, A, y, data.m)


def _logistic(x, A, y, m):
    margin = y * np.asarray(A @ x).ravel()
    return _logistic_value(margin, m), _logistic_grad(margin, A, y, m)


def _logistic_value(margin, m):
    return float(np.logaddexp(0.0, -margin).sum() / m)


def _logistic_grad(margin, A, y, m):
    return np.asarray(A.T @ (-y * expit(-margin) / m)).ravel()


def quadratic_value_grad(x, A, b):
    """``(0.5 ||Ax - b||^2, A^T (Ax - b))``."""
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0] or A.shape[0] != np.shape(b)[0]:
        raise ShapeError(f"A is {A.shape}, x has {x.shape[0]} entries, b has {np.shape(b)[0]}")
    r = np.asarray(A @ x).ravel() - b
    return 0.5 * float(r @ r), np.asarray(A.T @ r).ravel()


def lipschitz_estimate(A, kind="quadratic", m=None, seed=0):
    """Gradient Lipschitz constant from ``lambda_max(A^T A)``.

    ``quadratic`` gives ``lambda_max(A^T A)``; ``logistic`` divides by ``4 m``
    since the logistic curvature never exceeds ``1/4``.
    """
    top = power_iteration_opnorm(matrix_map(A), seed=seed)
    if kind == "quadratic":
        return top
    if kind == "logistic":
        m = A.shape[0] if m is None else m
        return top / (4.0 * m)
    raise ParameterError(f"unknown loss kind {kind!r}")


def quadratic_smooth(A, b, lipschitz=None):
    b = np.asarray(b, dtype=float)
    if lipschitz is None:
        lipschitz = lipschitz_estimate(A, "quadratic")

    def value(x):
        r = np.asarray(A @ x).ravel() - b
        return 0.5 * float(r @ r)

    def grad(x):
        return np.asarray(A.T @ (np.asarray(A @ x).ravel() - b)).ravel()

    return SmoothFn(value=value, grad=grad, lipschitz=lipschitz, dim=A.shape[1])


def logistic_smooth(data: Dataset, indices=None, lipschitz=None):
    A = _rows(data.features, indices)
    y = data.labels if indices is None else data.labels[np.asarray(indices, dtype=np.intp)]
    m = data.m
    if lipschitz is None:
        lipschitz = lipschitz_estimate(data.features, "logistic", m)
    AT = A.T.tocsr() if sp.issparse(A) else A.T

    def value(x):
        return _logistic_value(y * np.asarray(A @ x).ravel(), m)

    def grad(x):
        margin = y * np.asarray(A @ x).ravel()
        return np.asarray(AT @ (-y * expit(-margin) / m)).ravel()

    return SmoothFn(value=value, grad=grad, lipschitz=lipschitz, dim=data.q)


def build_lasso(A, b, tau, D=None):
    """``0.5 ||Ax - b||^2 + tau ||D x||_1`` with the l1 term on the dual path (``g = 0``)."""
    if tau < 0:
        raise ParameterError(f"tau must be nonnegative, got {tau}")
    A = np.atleast_2d(np.asarray(A, dtype=float)) if not sp.issparse(A) else A
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[0] != b.shape[0]:
        raise ShapeError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
    D = identity_map(A.shape[1]) if D is None else D
    return CompositeProblem(f=quadratic_smooth(A, b), g=ZeroFunction(A.shape[1]),
                            h=L1Norm(D.out_dim, tau), D=D)


def build_logistic(data: Dataset, tau):
    """Full-data logistic loss plus ``tau ||x||_1`` on the dual path."""
    if tau < 0:
        raise ParameterError(f"tau must be nonnegative, got {tau}")
    q = data.q
    return CompositeProblem(f=logistic_smooth(data), g=ZeroFunction(q), h=L1Norm(q, tau),
                            D=identity_map(q))


def build_batched_logistic(data: Dataset, partition: Partition, tau):
    """One logistic batch per partition block, each with ``(tau/N) ||x_n||_1``.

    Every batch uses the global Lipschitz bound so that all share one ``beta``.
    """
    if partition.m != data.m:
        raise ParameterError(f"partition covers {partition.m} samples, dataset has {data.m}")
    L = lipschitz_estimate(data.features, "logistic", data.m)
    n = len(partition)
    fs = [logistic_smooth(data, block, lipschitz=L) for block in partition.blocks]
    gs = [L1Norm(data.q, tau / n) for _ in range(n)]
    return BatchedProblem(fs, gs, lipschitz=L)


def build_batched_lasso(A, b, partition: Partition, tau):
    """Row-split least squares with ``(tau/N) ||x_n||_1`` per batch and the global Lipschitz bound."""
    A = np.asarray(A, dtype=float) if not sp.issparse(A) else A
    b = np.asarray(b, dtype=float)
    L = lipschitz_estimate(A, "quadratic")
    n = len(partition)
    fs = [quadratic_smooth(A[blk], b[blk], lipschitz=L) for blk in partition.blocks]
    gs = [L1Norm(A.shape[1], tau / n) for _ in range(n)]
    return BatchedProblem(fs, gs, lipschitz=L)


def generate_synthetic(kind, seed=0, m=100, q=20, sparsity=0.2, noise=0.1):
    """Gaussian design with a sparse ``+-1`` ground truth.

    Returns ``(Dataset, x_true)``; for ``lasso`` the labels are real targets
    ``A x_true + noise``, for ``logistic`` they are ``sign(A x_true + noise)``
    with ``sign(0) = +1``.
    """
    if kind not in ("lasso", "logistic"):
        raise ParameterError(f"unknown synthetic kind {kind!r}")
    if m < 1 or q < 1:
        raise ParameterError("m and q must be positive")
    if not 0 <= sparsity <= 1:
        raise ParameterError(f"sparsity must lie in [0, 1], got {sparsity}")
    if noise < 0:
        raise ParameterError(f"noise must be nonnegative, got {noise}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, q))
    k = math.ceil(sparsity * q)
    x_true = np.zeros(q)
    support = rng.choice(q, size=k, replace=False)
    x_true[support] = rng.choice([-1.0, 1.0], size=k)
    target = A @ x_true + noise * rng.standard_normal(m)
    if kind == "lasso":
        return Dataset(A, target, task="regression"), x_true
    labels = np.where(target >= 0, 1.0, -1.0)
    return Dataset(A, labels, task="classification"), x_true
