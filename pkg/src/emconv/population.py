"""Monte-Carlo stand-ins for the population operators and estimators of the
regularity constants (strong concavity, smoothness, FOS/GS stability,
contraction factor, uniform SGD variance, uniform sample deviation).

Population expectations are replaced by sample averages over ``mc_n`` fresh
draws. Standard errors come from splitting those draws into 10 equal batches
and taking the spread of the per-batch results over ``sqrt(10)``. Reported
maxima over probe points are lower bounds on the true suprema, nothing more.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RngStream
from .models.base import LatentModel

N_BATCHES = 10
KINDS = ("em", "grad", "oracle")


@dataclass(frozen=True)
class ProbeSpec:
    radius: float
    rng: RngStream
    num_probes: int = 100
    mc_n: int = 100_000
    style: str = "sphere"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("probe radius must be positive")
        if self.mc_n < 1000:
            raise ValueError("mc_n must be at least 1000")
        if self.style not in ("sphere", "ball"):
            raise ValueError("style must be 'sphere' or 'ball'")


def draw_probes(theta_star, spec: ProbeSpec) -> np.ndarray:
    """Probe points around ``theta_star``: on the sphere of radius
    ``spec.radius`` or uniform in the ball."""
    theta_star = np.asarray(theta_star, dtype=float)
    d = theta_star.shape[0]
    gen = spec.rng.child("probes").generator()
    u = gen.standard_normal((spec.num_probes, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = np.full(spec.num_probes, spec.radius)
    if spec.style == "ball":
        r = r * gen.random(spec.num_probes) ** (1.0 / d)
    return theta_star + r[:, None] * u


def _batches(n):
    size = n // N_BATCHES
    return [slice(k * size, (k + 1) * size) for k in range(N_BATCHES)]


def _batch_se(values) -> float:
    """Standard error of a full-sample statistic from its per-batch values,
    aggregated in Euclidean norm over coordinates."""
    values = np.asarray(values, dtype=float).reshape(N_BATCHES, -1)
    se = values.std(axis=0, ddof=1) / np.sqrt(N_BATCHES)
    return float(np.linalg.norm(se))


def apply_operator(model: LatentModel, data, theta, kind: str = "em",
                   alpha: float = 1.0) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if kind == "em":
        return model.m_step(data, theta)
    if kind == "grad":
        return model.grad_step(data, theta, alpha)
    if kind == "oracle":
        return theta + alpha * model.q_grad(data, theta, model.theta_star)
    raise ValueError(f"operator kind must be one of {KINDS}")


def pop_operator(model: LatentModel, theta, kind: str = "em", alpha: float = 1.0,
                 mc_n: int = 100_000, rng: RngStream | None = None, data=None):
    """Monte-Carlo population operator. Returns ``(estimate, stderr)``.

    Pass ``data`` to reuse a Monte-Carlo sample (common random numbers).
    """
    if data is None:
        if mc_n < 1000:
            raise ValueError("mc_n must be at least 1000")
        data = model.sample(mc_n, rng)
    est = apply_operator(model, data, theta, kind, alpha)
    per_batch = [apply_operator(model, data[sl], theta, kind, alpha)
                 for sl in _batches(len(data))]
    return est, _batch_se(per_batch)


@dataclass
class ProbeResults:
    """Per-probe ratios with the maximum and its batch standard error."""

    probes: np.ndarray
    ratios: np.ndarray
    stderrs: np.ndarray

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.ratios))

    @property
    def max(self) -> float:
        return float(self.ratios[self.argmax])

    @property
    def stderr(self) -> float:
        return float(self.stderrs[self.argmax])


def _probe_ratios(model, probe: ProbeSpec, fn, probes=None) -> ProbeResults:
    """Evaluate ``|fn(data, theta)| / |theta - theta*|`` over probes with one
    shared Monte-Carlo sample. A probe sitting exactly at ``theta*`` gets ratio 0.

    The stderr is that of the vector ``fn(data, theta)``, which bounds the
    error in its norm by the triangle inequality; the spread of per-batch
    norms alone would miss the upward bias of a noisy norm.
    """
    data = model.sample(probe.mc_n, probe.rng.child("mc"))
    batches = [data[sl] for sl in _batches(len(data))]
    if probes is None:
        probes = draw_probes(model.theta_star, probe)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    ratios, ses = [], []
    for theta in probes:
        dist = np.linalg.norm(theta - model.theta_star)
        if dist == 0.0:
            ratios.append(0.0)
            ses.append(0.0)
            continue
        ratios.append(np.linalg.norm(fn(data, theta)) / dist)
        ses.append(_batch_se([fn(b, theta) for b in batches]) / dist)
    return ProbeResults(probes, np.array(ratios), np.array(ses))


def estimate_contraction(model: LatentModel, probe: ProbeSpec, kind: str = "em",
                         alpha: float = 1.0, probes=None) -> ProbeResults:
    """Max over probes of ``|M(theta) - theta*| / |theta - theta*|``."""
    return _probe_ratios(
        model, probe,
        lambda data, th: apply_operator(model, data, th, kind, alpha) - model.theta_star,
        probes)


def estimate_fos_gamma(model: LatentModel, probe: ProbeSpec, probes=None) -> ProbeResults:
    """Max over probes of ``|grad Q(M(theta)|theta*) - grad Q(M(theta)|theta)|``
    divided by ``|theta - theta*|``."""

    def fn(data, th):
        m = model.m_step(data, th)
        return model.q_grad(data, m, model.theta_star) - model.q_grad(data, m, th)

    return _probe_ratios(model, probe, fn, probes)


def estimate_gs_gamma(model: LatentModel, probe: ProbeSpec, probes=None) -> ProbeResults:
    """As :func:`estimate_fos_gamma` but with the gradients taken at ``theta``."""

    def fn(data, th):
        return model.q_grad(data, th, model.theta_star) - model.q_grad(data, th, th)

    return _probe_ratios(model, probe, fn, probes)


def estimate_concavity(model: LatentModel, mc_n: int = 100_000, rng: RngStream | None = None,
                       data=None):
    """Extreme eigenvalues ``(lambda, mu)`` of ``-Hessian`` of ``Q(.|theta*)``.

    Returns ``(lambda_hat, mu_hat, stderr)``. The stderr is the batch standard
    error of the Hessian estimate in Frobenius norm, which bounds the error of
    every eigenvalue through Weyl's inequality.
    """
    if data is None:
        data = model.sample(mc_n, rng)
    H = -model.hessian(data, model.theta_star)
    eig = np.linalg.eigvalsh(H)
    per_batch = [-model.hessian(data[sl], model.theta_star) for sl in _batches(len(data))]
    return float(eig[0]), float(eig[-1]), _batch_se(per_batch)


def estimate_sgd_variance(model: LatentModel, probe: ProbeSpec, probes=None):
    """Max over probes of ``E |grad Q_1(theta|theta)|^2``. Returns ``(value, stderr)``."""
    data = model.sample(probe.mc_n, probe.rng.child("mc"))
    if probes is None:
        probes = draw_probes(model.theta_star, probe)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    best, best_se = -np.inf, 0.0
    for theta in probes:
        sq = np.sum(model.sample_grads(data, theta, theta) ** 2, axis=1)
        val = float(sq.mean())
        if val > best:
            best = val
            best_se = _batch_se([sq[sl].mean() for sl in _batches(len(sq))])
    return best, best_se


@dataclass
class DeviationEstimate:
    n: int
    max_dev: float
    quantile95: float
    num_probes: int
    reps: int
    deviations: np.ndarray = field(repr=False)


def estimate_deviation(model: LatentModel, n: int, probe: ProbeSpec, reps: int = 5,
                       kind: str = "em", alpha: float = 1.0,
                       rep_streams: list[RngStream] | None = None) -> DeviationEstimate:
    """Empirical proxy for the uniform deviation ``sup |M_n(theta) - M(theta)|``.

    ``M`` is evaluated on ``probe.mc_n`` draws from ``probe.rng``; rep ``k``
    draws its ``n`` samples from ``rep_streams[k]`` (default: children of the
    probe stream).
    """
    if rep_streams is None:
        rep_streams = [probe.rng.child("deviation-rep", k) for k in range(reps)]
    reps = len(rep_streams)
    pop_data = model.sample(probe.mc_n, probe.rng)
    probes = draw_probes(model.theta_star, probe)
    reference = [apply_operator(model, pop_data, th, kind, alpha) for th in probes]
    devs = np.empty((reps, len(probes)))
    for k, stream in enumerate(rep_streams):
        data = model.sample(n, stream)
        for j, th in enumerate(probes):
            devs[k, j] = np.linalg.norm(apply_operator(model, data, th, kind, alpha) - reference[j])
    return DeviationEstimate(n, float(devs.max()), float(np.quantile(devs, 0.95)),
                             len(probes), reps, devs)


@dataclass
class ConditionEstimate:
    lam: float
    mu: float
    gamma_fos: float
    gamma_gs: float
    kappa: float
    xi: float
    sigma_g_sq: float
    stderr: dict


def estimate_conditions(model: LatentModel, probe: ProbeSpec, kind: str = "em",
                        alpha: float = 1.0) -> ConditionEstimate:
    """All regularity estimates over one probe specification."""
    lam, mu, se_h = estimate_concavity(model, probe.mc_n, probe.rng.child("mc"))
    fos = estimate_fos_gamma(model, probe)
    gs = estimate_gs_gamma(model, probe)
    kap = estimate_contraction(model, probe, kind, alpha)
    sg, se_sg = estimate_sgd_variance(model, probe)
    xi = 2.0 * lam * mu / (lam + mu) - gs.max
    stderr = {"hessian": se_h, "gamma_fos": fos.stderr, "gamma_gs": gs.stderr,
              "kappa": kap.stderr, "sigma_g_sq": se_sg}
    return ConditionEstimate(lam, mu, fos.max, gs.max, kap.max, xi, sg, stderr)
