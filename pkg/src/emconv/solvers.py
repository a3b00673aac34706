"""Iteration drivers for EM, gradient EM, their sample-splitting variants and
projected stochastic gradient EM. All return a :class:`RunResult` whose trace
holds ``T + 1`` iterates, the first being the initialization.
"""

from __future__ import annotations

import numpy as np

from .core import (BallSpec, BatchTooSmall, RngStream, RunResult, SolverConfig, StepSchedule,
                   Trace, project_ball)
from .models.base import LatentModel


def _finish(thetas, model, config, **extra):
    return RunResult(Trace(np.array(thetas), theta_star=model.theta_star), config, extra)


def _check_iters(T):
    if T < 0:
        raise ValueError("iteration count must be nonnegative")


def run_em(model: LatentModel, data, theta0, T: int) -> RunResult:
    _check_iters(T)
    theta = np.asarray(theta0, dtype=float)
    thetas = [theta]
    for _ in range(T):
        theta = model.m_step(data, theta)
        thetas.append(theta)
    return _finish(thetas, model, SolverConfig("em", T))


def run_grad_em(model: LatentModel, data, theta0, schedule: StepSchedule, T: int) -> RunResult:
    _check_iters(T)
    theta = np.asarray(theta0, dtype=float)
    thetas = [theta]
    for t in range(T):
        theta = model.grad_step(data, theta, schedule(t))
        thetas.append(theta)
    return _finish(thetas, model, SolverConfig("grad", T, step=schedule))


def split_batches(n: int, T: int) -> list[slice]:
    """``T`` disjoint contiguous batches of ``n // T`` samples; the remainder is dropped."""
    if T < 1:
        raise ValueError("need at least one batch")
    size = n // T
    if size < 1:
        raise BatchTooSmall(f"{n} samples cannot fill {T} batches")
    return [slice(t * size, (t + 1) * size) for t in range(T)]


def run_em_split(model: LatentModel, data, theta0, T: int) -> RunResult:
    theta = np.asarray(theta0, dtype=float)
    thetas = [theta]
    batches = split_batches(len(data), T) if T > 0 else []
    for sl in batches:
        theta = model.m_step(data[sl], theta)
        thetas.append(theta)
    return _finish(thetas, model, SolverConfig("em-split", T, split_batches=T), batches=batches)


def run_grad_em_split(model: LatentModel, data, theta0, schedule: StepSchedule,
                      T: int) -> RunResult:
    theta = np.asarray(theta0, dtype=float)
    thetas = [theta]
    batches = split_batches(len(data), T) if T > 0 else []
    for t, sl in enumerate(batches):
        theta = model.grad_step(data[sl], theta, schedule(t))
        thetas.append(theta)
    config = SolverConfig("grad-split", T, step=schedule, split_batches=T)
    return _finish(thetas, model, config, batches=batches)


def run_sgd_em(model: LatentModel, rng: RngStream, theta0, r: float,
               schedule: StepSchedule, T: int) -> RunResult:
    """Projected stochastic gradient EM with one fresh sample per step.

    Iterates are projected onto the ball of radius ``r / 2`` around ``theta0``.
    """
    _check_iters(T)
    if not r > 0:
        raise ValueError("projection radius must be positive")
    theta = np.asarray(theta0, dtype=float)
    ball = BallSpec(theta, r / 2.0)
    thetas = np.empty((T + 1, theta.shape[0]))
    thetas[0] = theta
    if T > 0:
        stream = model.sample(T, rng)
        for t in range(T):
            g = model.sample_grads(stream[t], theta, theta)[0]
            theta = project_ball(theta + schedule(t) * g, ball)
            thetas[t + 1] = theta
    config = SolverConfig("sgd", T, step=schedule, projection=ball)
    return RunResult(Trace(thetas, theta_star=model.theta_star), config)


def run(model: LatentModel, config: SolverConfig, theta0, data=None,
        rng: RngStream | None = None) -> RunResult:
    """Dispatch on ``config.algo``; ``sgd`` draws its own samples from ``rng``."""
    T = config.iters
    if config.algo == "em":
        return run_em(model, data, theta0, T)
    if config.algo == "em-split":
        return run_em_split(model, data, theta0, T)
    if config.algo == "grad":
        return run_grad_em(model, data, theta0, config.step, T)
    if config.algo == "grad-split":
        return run_grad_em_split(model, data, theta0, config.step, T)
    if rng is None:
        raise ValueError("sgd needs a random stream")
    return run_sgd_em(model, rng, theta0, 2.0 * config.projection.radius, config.step, T)


def iterate_to_fixed_point(model: LatentModel, data, theta0, alpha: float | None = None,
                           tol: float = 1e-12, max_iter: int = 20000) -> np.ndarray:
    """Run EM (``alpha is None``) or constant-step gradient EM until the step
    length drops below ``tol`` or ``max_iter`` is hit."""
    theta = np.asarray(theta0, dtype=float)
    for _ in range(max_iter):
        new = model.m_step(data, theta) if alpha is None else model.grad_step(data, theta, alpha)
        moved = np.linalg.norm(new - theta)
        theta = new
        if moved < tol:
            break
    return theta
