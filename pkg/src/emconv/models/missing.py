"""Linear regression ``y = <x, θ*> + σ v`` with covariates missing completely at random.

Unobserved covariates are stored as zeros next to a boolean mask
(``True`` = observed). The E-step imputes

    mu    = z*x + (y - <z*theta, z*x>) / (sigma^2 + |m|^2) * m,   m = (1 - z)*theta
    Sigma = I_mis + mu mu^T - mu_mis mu_mis^T

which places an identity on the missing-missing block. ``second_moment="exact"``
swaps in the true conditional second moment
``I - m m^T / (sigma^2 + |m|^2) + mu_mis mu_mis^T`` on that block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import RngStream, solve_spd
from .base import LatentModel, check_nonempty

SECOND_MOMENTS = ("paper", "exact")


@dataclass(frozen=True)
class MissingData:
    x: np.ndarray
    mask: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if np.any(self.x[~self.mask] != 0.0):
            raise ValueError("unobserved covariates must be stored as 0")

    def __len__(self):
        return self.y.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return MissingData(self.x[idx], self.mask[idx], self.y[idx])


@dataclass(frozen=True)
class ImputedMoments:
    mu: np.ndarray
    sigma_mat: np.ndarray


def missing_sample(theta_star, sigma: float, omega: float, n: int,
                   rng: RngStream) -> MissingData:
    if not 0.0 <= omega < 1.0:
        raise ValueError("omega must lie in [0, 1)")
    theta_star = np.asarray(theta_star, dtype=float)
    gen = rng.generator()
    x = gen.standard_normal((n, theta_star.shape[0]))
    y = x @ theta_star + sigma * gen.standard_normal(n)
    mask = gen.random(x.shape) >= omega
    return MissingData(np.where(mask, x, 0.0), mask, y)


def _impute_mean(theta, data: MissingData, sigma: float):
    m = np.where(data.mask, 0.0, theta)
    resid = data.y - data.x @ theta  # x is zero on missing coordinates
    coef = resid / (sigma ** 2 + np.sum(m * m, axis=1))
    return data.x + coef[:, None] * m, m


def _aggregate(theta, data: MissingData, sigma: float, second_moment: str):
    """Sums over samples of ``Sigma_theta`` and ``y * mu_theta``."""
    mu, m = _impute_mean(theta, data, sigma)
    missing = ~data.mask
    mu_mis = np.where(missing, mu, 0.0)
    S = mu.T @ mu - mu_mis.T @ mu_mis
    S[np.diag_indices_from(S)] += missing.sum(axis=0)
    if second_moment == "exact":
        den = sigma ** 2 + np.sum(m * m, axis=1)
        S += mu_mis.T @ mu_mis - (m / den[:, None]).T @ m
    return S, data.y @ mu


def impute_moments(theta, x_observed, mask, y: float, sigma: float,
                   second_moment: str = "paper") -> ImputedMoments:
    """Conditional mean and second moment of one covariate vector."""
    mask = np.asarray(mask, dtype=bool)
    data = MissingData(np.asarray(x_observed, dtype=float)[None, :], mask[None, :],
                       np.array([float(y)]))
    mu = _impute_mean(np.asarray(theta, dtype=float), data, sigma)[0][0]
    S, _ = _aggregate(np.asarray(theta, dtype=float), data, sigma, second_moment)
    return ImputedMoments(mu, S)


def missing_q_value(data: MissingData, theta_prime, theta, sigma: float,
                    second_moment: str = "paper") -> float:
    n = check_nonempty(data)
    S, b = _aggregate(theta, data, sigma, second_moment)
    return float(-0.5 * theta_prime @ S @ theta_prime + b @ theta_prime) / n


def missing_q_grad(data: MissingData, theta_prime, theta, sigma: float,
                   second_moment: str = "paper") -> np.ndarray:
    n = check_nonempty(data)
    S, b = _aggregate(theta, data, sigma, second_moment)
    return (b - S @ theta_prime) / n


def missing_m_step(data: MissingData, theta, sigma: float,
                   second_moment: str = "paper") -> np.ndarray:
    check_nonempty(data)
    S, b = _aggregate(theta, data, sigma, second_moment)
    return solve_spd(S, b)


def missing_prob_bound(zeta1: float, zeta2: float, omega: float):
    """Largest admissible missing probability and the contraction factor.

    With ``b = (zeta1 + zeta2)^2`` returns ``1 / (1 + 2b(1+b))`` and
    ``(b + omega (1 + 2b(1+b))) / (1 + b)``; the factor is below one
    exactly when ``omega`` is below the bound.
    """
    if not (zeta1 > 0 and zeta2 > 0):
        raise ValueError("zeta1 and zeta2 must be positive")
    b = (zeta1 + zeta2) ** 2
    c = 1.0 + 2.0 * b * (1.0 + b)
    return 1.0 / c, (b + omega * c) / (1.0 + b)


class MissingCovariates(LatentModel):
    name = "missing"

    def __init__(self, theta_star, sigma, omega: float, second_moment: str = "paper",
                 zeta2: float = 1.0):
        super().__init__(theta_star, sigma)
        if not 0.0 <= omega < 1.0:
            raise ValueError("omega must lie in [0, 1)")
        if second_moment not in SECOND_MOMENTS:
            raise ValueError(f"second_moment must be one of {SECOND_MOMENTS}")
        self.omega = float(omega)
        self.second_moment = second_moment
        self.zeta2 = float(zeta2)

    def sample(self, n, rng):
        return missing_sample(self.theta_star, self.sigma, self.omega, n, rng)

    def q_value(self, data, theta_prime, theta):
        return missing_q_value(data, theta_prime, theta, self.sigma, self.second_moment)

    def q_grad(self, data, theta_prime, theta):
        return missing_q_grad(data, theta_prime, theta, self.sigma, self.second_moment)

    def sample_grads(self, data, theta_prime, theta):
        check_nonempty(data)
        mu, m = _impute_mean(theta, data, self.sigma)
        missing = ~data.mask
        mu_mis = np.where(missing, mu, 0.0)
        sig_theta = (np.where(missing, theta_prime, 0.0)
                     + mu * (mu @ theta_prime)[:, None]
                     - mu_mis * (mu_mis @ theta_prime)[:, None])
        if self.second_moment == "exact":
            den = self.sigma ** 2 + np.sum(m * m, axis=1)
            sig_theta += (mu_mis * (mu_mis @ theta_prime)[:, None]
                          - m * ((m @ theta_prime) / den)[:, None])
        return data.y[:, None] * mu - sig_theta

    def m_step(self, data, theta):
        return missing_m_step(data, theta, self.sigma, self.second_moment)

    def hessian(self, data, theta):
        n = check_nonempty(data)
        S, _ = _aggregate(theta, data, self.sigma, self.second_moment)
        return -S / n

    def corollary_radius(self):
        return self.zeta2 * self.sigma

    def prob_bound(self):
        zeta1 = max(self.snr, np.finfo(float).tiny)
        return missing_prob_bound(zeta1, self.zeta2, self.omega)

    def default_xi(self):
        _, kappa = self.prob_bound()
        return 1.0 - kappa if kappa < 1.0 else 1.0
