"""Symmetric mixture of two linear regressions, ``y = ±<x, θ*> + σ v``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..core import RngStream, solve_spd
from .base import LatentModel, check_nonempty


@dataclass(frozen=True)
class MorData:
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.y.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return MorData(self.x[idx], self.y[idx])


def mor_sample(theta_star, sigma: float, n: int, rng: RngStream) -> MorData:
    theta_star = np.asarray(theta_star, dtype=float)
    gen = rng.generator()
    x = gen.standard_normal((n, theta_star.shape[0]))
    signs = np.where(gen.integers(0, 2, size=n) == 1, 1.0, -1.0)
    noise = gen.standard_normal(n)
    return MorData(x, signs * (x @ theta_star) + sigma * noise)


def mor_weight(theta, x, y, sigma: float):
    """``logistic(2 y <x, theta> / sigma^2)``; vectorised over rows of ``x``."""
    return expit(2.0 * np.asarray(y) * (np.asarray(x) @ np.asarray(theta)) / sigma ** 2)


def _signed_weights(theta, data: MorData, sigma):
    return np.tanh(data.y * (data.x @ theta) / sigma ** 2)


def mor_q_value(data: MorData, theta_prime, theta, sigma: float) -> float:
    n = check_nonempty(data)
    w = mor_weight(theta, data.x, data.y, sigma)
    fit = data.x @ theta_prime
    total = np.sum(w * (data.y - fit) ** 2 + (1.0 - w) * (data.y + fit) ** 2)
    return -float(total) / (2.0 * n)


def mor_q_grad(data: MorData, theta_prime, theta, sigma: float) -> np.ndarray:
    n = check_nonempty(data)
    s = _signed_weights(theta, data, sigma)
    return ((s * data.y) @ data.x - data.x.T @ (data.x @ theta_prime)) / n


def mor_m_step(data: MorData, theta, sigma: float, gram=None) -> np.ndarray:
    """Closed-form M-step; ``gram`` may carry a precomputed ``X^T X``."""
    check_nonempty(data)
    s = _signed_weights(theta, data, sigma)
    if gram is None:
        gram = data.x.T @ data.x
    return solve_spd(gram, (s * data.y) @ data.x)


class MixtureOfRegressions(LatentModel):
    name = "mor"

    radius_fraction = 1.0 / 32.0

    def sample(self, n, rng):
        return mor_sample(self.theta_star, self.sigma, n, rng)

    def q_value(self, data, theta_prime, theta):
        return mor_q_value(data, theta_prime, theta, self.sigma)

    def q_grad(self, data, theta_prime, theta):
        return mor_q_grad(data, theta_prime, theta, self.sigma)

    def sample_grads(self, data, theta_prime, theta):
        check_nonempty(data)
        s = _signed_weights(theta, data, self.sigma)
        return (s * data.y - data.x @ theta_prime)[:, None] * data.x

    def m_step(self, data, theta):
        return mor_m_step(data, theta, self.sigma)

    def hessian(self, data, theta):
        n = check_nonempty(data)
        return -(data.x.T @ data.x) / n

    def corollary_radius(self):
        return float(np.linalg.norm(self.theta_star)) * self.radius_fraction
