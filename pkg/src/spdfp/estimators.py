"""scikit-learn style estimators for l1-regularized least squares and logistic regression.

Both estimators fit without an intercept; center the data or append a
constant column if one is needed.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .exceptions import ConfigurationError
from .problems import Dataset
from .runner import ALGORITHMS, RunConfig, run


class _SPDFPBase(BaseEstimator):
    _kind = "lasso"

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.sparse = True
        return tags

    def _linear(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, accept_sparse="csr", dtype=np.float64, reset=False)
        return np.asarray(X @ self.coef_).ravel()

    def _check_params(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.tau < 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")

    def _fit_dataset(self, data: Dataset):
        self._check_params()
        graph = self.graph
        if self.algorithm.startswith("dist-") and graph is None:
            graph = f"ring:{self.n_batches}"
        cfg = RunConfig(
            algorithm=self.algorithm, kind=self._kind, tau=self.tau, gamma=self.gamma, lam=self.lam,
            batches=self.n_batches if self.algorithm in ("minibatch", "smspdfp2o") else None,
            partition=self.partition, graph=graph, sampler=self.sampler,
            seed=0 if self.random_state is None else int(self.random_state),
            tol=self.tol, max_iter=self.max_iter,
        )
        res = run(cfg, data=data)
        self.coef_ = np.asarray(res.x, dtype=float)
        self.objective_ = res.objective
        self.n_iter_ = res.trace.iterations
        self.converged_ = res.converged
        self.trace_ = res.trace
        self.gamma_, self.lam_ = res.gamma, res.lam
        return self


class SPDFPLasso(RegressorMixin, _SPDFPBase):
    """Minimize ``0.5 ||Xw - y||^2 + tau ||w||_1``.

    Parameters
    ----------
    tau : float
        l1 weight.
    algorithm : str
        One of ``pdfp2o``, ``spdfp2o``, ``minibatch``, ``smspdfp2o``,
        ``dist-sync`` or ``dist-async``.
    gamma, lam : float or "auto"
        Step sizes; ``auto`` picks ``gamma = 1/L`` and the largest valid lambda.
    n_batches : int
        Number of batches (or agents on the default ring) for the split modes.
    partition : str
        How samples are assigned to batches.
    graph : str, optional
        Graph spec such as ``"star:5"`` for the distributed modes.
    sampler : str
        Block-activation rule for the stochastic modes.
    tol, max_iter : float, int
        Stop when the fixed-point residual falls below ``tol``.
    random_state : int, optional
        Seed for partitions and samplers.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    n_iter_ : int
    converged_ : bool
    trace_ : IterationTrace
    """

    _kind = "lasso"

    def __init__(self, tau=1.0, algorithm="spdfp2o", gamma="auto", lam="auto", n_batches=3,
                 partition="contiguous", graph=None, sampler="single", tol=1e-8, max_iter=100_000,
                 random_state=None):
        self.tau = tau
        self.algorithm = algorithm
        self.gamma = gamma
        self.lam = lam
        self.n_batches = n_batches
        self.partition = partition
        self.graph = graph
        self.sampler = sampler
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, accept_sparse="csr", y_numeric=True, dtype=np.float64)
        return self._fit_dataset(Dataset(X, y, task="regression"))

    def predict(self, X):
        return self._linear(X)


class SPDFPLogisticRegression(ClassifierMixin, _SPDFPBase):
    """Binary logistic regression with an l1 penalty.

    Minimizes ``(1/m) sum_i log(1 + exp(-y_i x_i^T w)) + tau ||w||_1`` with
    the two classes encoded as -1 and +1. Parameters match
    :class:`SPDFPLasso` except for the default ``tau``.
    """

    _kind = "logistic"

    def __init__(self, tau=0.01, algorithm="spdfp2o", gamma="auto", lam="auto", n_batches=3,
                 partition="contiguous", graph=None, sampler="single", tol=1e-8, max_iter=100_000,
                 random_state=None):
        self.tau = tau
        self.algorithm = algorithm
        self.gamma = gamma
        self.lam = lam
        self.n_batches = n_batches
        self.partition = partition
        self.graph = graph
        self.sampler = sampler
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, accept_sparse="csr", dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) == 1:
            raise ValueError("y contains only one class; binary classification needs two")
        if len(self.classes_) > 2:
            raise ValueError(f"Only binary classification is supported. Got {len(self.classes_)} classes.")
        signed = np.where(y == self.classes_[1], 1.0, -1.0)
        return self._fit_dataset(Dataset(X, signed, task="classification"))

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.classifier_tags.multi_class = False
        return tags

    def decision_function(self, X):
        return self._linear(X)

    def predict_proba(self, X):
        from scipy.special import expit

        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores > 0).astype(int)]
