"""EM, gradient EM, sample-splitting and stochastic gradient EM for three
latent-variable models, with Monte-Carlo estimates of their local
contraction behaviour and an experiment harness."""

from .core import (BallSpec, BatchTooSmall, ConfigError, EMError, EmptyData, NotPositiveDefinite,
                   RngStream, RunResult, SolverConfig, StepSchedule, Trace, derive_stream,
                   project_ball, solve_spd)
from .models import (GaussianMixture, MissingCovariates, MixtureOfRegressions, build_model,
                     missing_prob_bound)
from .solvers import (run, run_em, run_em_split, run_grad_em, run_grad_em_split, run_sgd_em)

__version__ = "0.1.0"

__all__ = [
    "BallSpec", "BatchTooSmall", "ConfigError", "EMError", "EmptyData", "NotPositiveDefinite",
    "RngStream", "RunResult", "SolverConfig", "StepSchedule", "Trace", "derive_stream",
    "project_ball", "solve_spd", "GaussianMixture", "MissingCovariates",
    "MixtureOfRegressions", "build_model", "missing_prob_bound", "run", "run_em",
    "run_em_split", "run_grad_em", "run_grad_em_split", "run_sgd_em",
]
