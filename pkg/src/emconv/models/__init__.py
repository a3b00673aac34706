from .base import LatentModel
from .gmm import GaussianMixture, GmmData, gmm_m_step, gmm_q_grad, gmm_q_value, gmm_sample, gmm_weight
from .missing import (ImputedMoments, MissingCovariates, MissingData, impute_moments,
                      missing_m_step, missing_prob_bound, missing_q_grad, missing_q_value,
                      missing_sample)
from .mor import MixtureOfRegressions, MorData, mor_m_step, mor_q_grad, mor_q_value, mor_sample, mor_weight

MODELS = ("gmm", "mor", "missing")


def build_model(name: str, theta_star, sigma: float = 1.0, omega: float = 0.2,
                **kwargs) -> LatentModel:
    if name == "gmm":
        return GaussianMixture(theta_star, sigma)
    if name == "mor":
        return MixtureOfRegressions(theta_star, sigma)
    if name == "missing":
        return MissingCovariates(theta_star, sigma, omega, **kwargs)
    raise ValueError(f"unknown model {name!r}; expected one of {MODELS}")


__all__ = [
    "LatentModel", "GaussianMixture", "GmmData", "MixtureOfRegressions", "MorData",
    "MissingCovariates", "MissingData", "ImputedMoments", "MODELS", "build_model",
    "gmm_sample", "gmm_weight", "gmm_q_value", "gmm_q_grad", "gmm_m_step",
    "mor_sample", "mor_weight", "mor_q_value", "mor_q_grad", "mor_m_step",
    "missing_sample", "impute_moments", "missing_q_value", "missing_q_grad",
    "missing_m_step", "missing_prob_bound",
]
