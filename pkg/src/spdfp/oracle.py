"""Reference solutions for l1-regularized least squares and logistic regression.

This module deliberately shares no code with the solvers it is used to check:
it has its own losses, its own shrinkage and takes the step size from a dense
eigendecomposition instead of power iteration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class OracleResult:
    x: np.ndarray
    objective: float
    certificate: float
    iterations: int
    converged: bool

    def as_dict(self):
        return {
            "x": self.x.tolist(),
            "objective": self.objective,
            "certificate": self.certificate,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _top_eig(A):
    M = A.T @ A
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    return float(np.linalg.eigvalsh(M)[-1])


def _shrink(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _prox_grad(value, grad, L, tau, x0, tol, max_iter):
    """Proximal gradient with step ``1/L``, momentum and function-value restart.

    Stops when the gradient mapping ``L ||x - shrink(x - grad/L)||`` is below
    ``tol``; that norm is returned as the optimality certificate.
    """
    t = 1.0 / L
    x = np.array(x0, dtype=float, copy=True)
    z = x.copy()
    theta = 1.0
    obj = value(x) + tau * np.abs(x).sum()
    cert = np.inf
    for it in range(1, max_iter + 1):
        x_new = _shrink(z - t * grad(z), t * tau)
        obj_new = value(x_new) + tau * np.abs(x_new).sum()
        if obj_new > obj:
            # restart momentum from a plain proximal-gradient step
            theta = 1.0
            x_new = _shrink(x - t * grad(x), t * tau)
            obj_new = value(x_new) + tau * np.abs(x_new).sum()
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        z = x_new + ((theta - 1.0) / theta_new) * (x_new - x)
        x, obj, theta = x_new, obj_new, theta_new
        cert = L * np.linalg.norm(x - _shrink(x - t * grad(x), t * tau))
        if cert <= tol:
            return OracleResult(x, float(obj), float(cert), it, True)
    return OracleResult(x, float(obj), float(cert), max_iter, False)


def lasso_oracle(A, b, tau, tol=1e-10, max_iter=1_000_000):
    """Minimize ``0.5 ||Ax - b||^2 + tau ||x||_1``."""
    A = A if sp.issparse(A) else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))

    def value(x):
        r = A @ x - b
        return 0.5 * float(r @ r)

    def grad(x):
        return A.T @ (A @ x - b)

    L = max(_top_eig(A), 1e-300)
    return _prox_grad(value, grad, L, tau, np.zeros(A.shape[1]), tol, max_iter)


def logistic_oracle(features, labels, tau, tol=1e-10, max_iter=1_000_000):
    """Minimize ``(1/m) sum_i log(1 + exp(-y_i a_i^T x)) + tau ||x||_1``."""
    A = features
    y = np.asarray(labels, dtype=float)
    m = A.shape[0]

    def value(x):
        z = y * (A @ x)
        return float(np.sum(np.where(z > 0, np.log1p(np.exp(-np.abs(z))),
                                     -z + np.log1p(np.exp(-np.abs(z))))) / m)

    def grad(x):
        z = y * (A @ x)
        # sigmoid(-z) without overflow
        e = np.exp(-np.abs(z))
        s = np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
        return A.T @ (-y * s) / m

    L = max(_top_eig(A) / (4.0 * m), 1e-300)
    return _prox_grad(value, grad, L, tau, np.zeros(A.shape[1]), tol, max_iter)


def lasso_subgradient_residual(x, A, b, tau, zero_tol=0.0):
    """``dist(0, A^T(Ax - b) + tau d||x||_1)`` in closed form."""
    g = np.asarray(A.T @ (A @ x - b)).ravel()
    return l1_subgradient_residual(x, g, tau, zero_tol)


def l1_subgradient_residual(x, grad, tau, zero_tol=0.0):
    """Distance from 0 to ``grad + tau * subdifferential of ||x||_1``.

    Entries with ``|x_i| <= zero_tol`` are treated as zero. Iterates of
    primal-dual methods carry round-off where the solution has exact zeros,
    and the subdifferential jumps there.
    """
    nz = np.abs(x) > zero_tol
    r = np.where(nz, grad + tau * np.sign(x), np.maximum(np.abs(grad) - tau, 0.0))
    return float(np.linalg.norm(r))
