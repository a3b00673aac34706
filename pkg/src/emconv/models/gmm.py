"""Symmetric two-component isotropic Gaussian mixture ``0.5 N(θ*, σ²I) + 0.5 N(-θ*, σ²I)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..core import RngStream
from .base import LatentModel, check_nonempty


@dataclass(frozen=True)
class GmmData:
    y: np.ndarray

    def __len__(self):
        return self.y.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return GmmData(self.y[idx])


def gmm_sample(theta_star, sigma: float, n: int, rng: RngStream) -> GmmData:
    theta_star = np.asarray(theta_star, dtype=float)
    gen = rng.generator()
    signs = np.where(gen.integers(0, 2, size=n) == 1, 1.0, -1.0)
    noise = gen.standard_normal((n, theta_star.shape[0]))
    return GmmData(signs[:, None] * theta_star + sigma * noise)


def gmm_weight(theta, y, sigma: float):
    """Posterior probability that ``y`` came from the ``+theta`` component.

    Equal to ``logistic(2 <theta, y> / sigma^2)``; works on a single point
    or an ``(n, d)`` array.
    """
    return expit(2.0 * (np.asarray(y) @ np.asarray(theta)) / sigma ** 2)


def _signed_weights(theta, y, sigma):
    # 2 w - 1, odd in theta so the M-step keeps exact sign symmetry
    return np.tanh((y @ theta) / sigma ** 2)


def gmm_q_value(data: GmmData, theta_prime, theta, sigma: float) -> float:
    n = check_nonempty(data)
    w = gmm_weight(theta, data.y, sigma)
    plus = np.sum((data.y - theta_prime) ** 2, axis=1)
    minus = np.sum((data.y + theta_prime) ** 2, axis=1)
    return -float(np.sum(w * plus + (1.0 - w) * minus)) / (2.0 * n)


def gmm_q_grad(data: GmmData, theta_prime, theta, sigma: float) -> np.ndarray:
    check_nonempty(data)
    s = _signed_weights(theta, data.y, sigma)
    return s @ data.y / len(data) - theta_prime


def gmm_m_step(data: GmmData, theta, sigma: float) -> np.ndarray:
    n = check_nonempty(data)
    return _signed_weights(theta, data.y, sigma) @ data.y / n


class GaussianMixture(LatentModel):
    name = "gmm"

    def sample(self, n, rng):
        return gmm_sample(self.theta_star, self.sigma, n, rng)

    def q_value(self, data, theta_prime, theta):
        return gmm_q_value(data, theta_prime, theta, self.sigma)

    def q_grad(self, data, theta_prime, theta):
        return gmm_q_grad(data, theta_prime, theta, self.sigma)

    def sample_grads(self, data, theta_prime, theta):
        check_nonempty(data)
        s = _signed_weights(theta, data.y, self.sigma)
        return s[:, None] * data.y - theta_prime

    def m_step(self, data, theta):
        return gmm_m_step(data, theta, self.sigma)

    def hessian(self, data, theta):
        check_nonempty(data)
        return -np.eye(self.d)

    def corollary_radius(self):
        return float(np.linalg.norm(self.theta_star)) / 4.0
