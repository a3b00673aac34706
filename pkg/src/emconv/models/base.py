from __future__ import annotations

import numpy as np

from ..core import EmptyData, RngStream


def check_nonempty(data) -> int:
    n = len(data)
    if n == 0:
        raise EmptyData("operator needs at least one sample")
    return n


class LatentModel:
    """Bundle of the sample-level operators for one model and oracle.

    Subclasses provide ``sample``, ``q_value``, ``q_grad``, ``sample_grads``,
    ``m_step`` and ``hessian``. ``m_step`` returns the exact maximizer of
    ``q_value(data, ., theta)`` and ``q_grad`` its exact gradient.
    """

    name = "base"

    def __init__(self, theta_star, sigma: float):
        self.theta_star = np.asarray(theta_star, dtype=float)
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)

    @property
    def d(self) -> int:
        return self.theta_star.shape[0]

    @property
    def snr(self) -> float:
        return float(np.linalg.norm(self.theta_star) / self.sigma)

    def sample(self, n: int, rng: RngStream):
        raise NotImplementedError

    def q_value(self, data, theta_prime, theta) -> float:
        raise NotImplementedError

    def q_grad(self, data, theta_prime, theta) -> np.ndarray:
        raise NotImplementedError

    def sample_grads(self, data, theta_prime, theta) -> np.ndarray:
        """Per-sample gradients of Q, shape ``(n, d)``; their mean is ``q_grad``."""
        raise NotImplementedError

    def m_step(self, data, theta) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, data, theta) -> np.ndarray:
        """Hessian of ``q_value(data, ., theta)``; constant since Q is quadratic."""
        raise NotImplementedError

    def grad_step(self, data, theta, alpha: float) -> np.ndarray:
        return theta + alpha * self.q_grad(data, theta, theta)

    def corollary_radius(self) -> float:
        """Default contraction radius around ``theta_star``."""
        raise NotImplementedError

    def default_xi(self) -> float:
        return 1.0

    def __repr__(self):
        return (f"{type(self).__name__}(d={self.d}, "
                f"|theta*|={np.linalg.norm(self.theta_star):.4g}, sigma={self.sigma:.4g})")
