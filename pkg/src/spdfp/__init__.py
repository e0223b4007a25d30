"""Splitting primal-dual fixed-point solvers for ``min f(x) + g(x) + h(Dx)``.

Centralized, stochastic minibatch and (a)synchronous distributed variants,
plus LASSO and l1-logistic problem builders and a benchmark CLI.
"""
from .estimators import SPDFPLasso, SPDFPLogisticRegression
from .exceptions import (ConfigurationError, ConvergenceError, DivergenceError, ModeError,
                         ParameterError, ParseError, ProtocolError, ShapeError, SpdfpError)
from .km import (BlockOperator, CoordinateSampler, RelaxationSchedule, StoppingRule, km_step,
                 masked_apply, randomized_km_run)
from .minibatch import BatchedProblem, MinibatchState, minibatch_step, run_stochastic, smspdfp2o_step
from .operators import LinearMap, identity_map, matrix_map, power_iteration_opnorm
from .oracle import lasso_oracle, logistic_oracle
from .problems import (Dataset, Partition, build_batched_lasso, build_batched_logistic, build_lasso,
                       build_logistic, generate_synthetic, partition_dataset)
from .prox import (ConsensusIndicator, L1Norm, PairConsensusIndicator, ProxFn, SeparableSum,
                   SmoothFn, ZeroFunction, lambda_norm, soft_threshold)
from .runner import RunConfig, run
from .solvers import (CompositeProblem, PdfpParams, SolverState, pdfp2o_step, solve, spdfp2o_step,
                      validate_params)
from .trace import IterationTrace, TraceRecord

__version__ = "0.1.0"
