"""Multi-trial experiments: traces, SNR sweeps, radius of convergence,
stochastic gradient EM and condition estimates, written as CSV plus SVG.

Every trial derives a 64-bit seed from ``(seed, trial)``; all randomness of
that trial (``theta*`` direction, data, initialization) flows from it, so a
single trial can be rerun in isolation from the ``seed`` column of its
summary row.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import solvers
from .analysis import TooFewPoints, compute_suggested_T, curve_rate, detect_plateau, loglog_slope
from .core import (ALGORITHMS, BallSpec, ConfigError, EMError, RngStream, SolverConfig, StepSchedule,
                   derive_stream)
from .models import MODELS, build_model
from .models.base import LatentModel
from .plotting import PlotSpec, emit_svg
from .population import ProbeSpec, estimate_conditions

log = logging.getLogger(__name__)

OPT_FLOOR = 1e-11
REFERENCE_TOL = 1e-12


@dataclass
class ExperimentSpec:
    model: str = "gmm"
    algo: str = "em"
    d: int = 10
    n: int = 1000
    trials: int = 10
    iters: int = 50
    snr: float = 2.0
    sigma: float = 1.0
    theta_norm: Optional[float] = None
    omega: float = 0.2
    seed: int = 0
    init_radius_frac: float = 1.0
    init_style: Optional[str] = None
    init_distance: Optional[float] = None
    step: float = 1.0
    xi: Optional[float] = None
    radius: Optional[float] = None
    zeta2: float = 1.0
    second_moment: str = "paper"
    out: str = "out"
    plot: bool = True
    # sub-command specific
    snr_grid: tuple = (1.5, 2.0, 3.0, 5.0)
    theta_norms: tuple = (1.0, 2.0, 4.0, 8.0)
    inits_per_radius: int = 100
    bisections: int = 12
    num_probes: int = 100
    mc_n: int = 100_000
    slope_t_min: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"algo must be one of {ALGORITHMS}")
        for name in ("d", "n", "trials"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.iters < 0:
            raise ConfigError("iters must be nonnegative")
        if not 0.0 < self.init_radius_frac <= 1.0:
            raise ConfigError("init_radius_frac must lie in (0, 1]")
        if self.init_style not in (None, "toward-theta-star", "random-direction"):
            raise ConfigError(f"unknown init_style {self.init_style!r}")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if not 0.0 <= self.omega < 1.0:
            raise ConfigError("omega must lie in [0, 1)")
        if self.algo in ("grad", "grad-split") and not self.step > 0:
            raise ConfigError("step must be positive")
        if self.xi is not None and not self.xi > 0:
            raise ConfigError("xi must be positive")
        if self.second_moment not in ("paper", "exact"):
            raise ConfigError("second_moment must be 'paper' or 'exact'")

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        values = dict(values)
        for key in ("snr_grid", "theta_norms"):
            if key in values:
                values[key] = tuple(float(v) for v in values[key])
        return cls(**values)

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    @property
    def norm(self) -> float:
        return self.theta_norm if self.theta_norm is not None else self.snr * self.sigma

    @property
    def style(self) -> str:
        if self.init_style is not None:
            return self.init_style
        return "random-direction" if self.model == "missing" else "toward-theta-star"


# --------------------------------------------------------------------------
# trial plumbing


@dataclass
class Trial:
    index: int
    seed: int
    model: LatentModel
    stream: RngStream


def trial_seed(master_seed: int, index: int) -> int:
    return derive_stream(master_seed, "trial", index).derived_seed()


def make_trial(spec: ExperimentSpec, index: int, norm: float | None = None) -> Trial:
    seed = trial_seed(spec.seed, index)
    stream = derive_stream(seed, "trial")
    u = stream.child("theta-star").normal(spec.d)
    u /= np.linalg.norm(u)
    norm = spec.norm if norm is None else norm
    kwargs = {}
    if spec.model == "missing":
        kwargs = dict(second_moment=spec.second_moment, zeta2=spec.zeta2)
    model = build_model(spec.model, norm * u, spec.sigma, spec.omega, **kwargs)
    return Trial(index, seed, model, stream)


def random_unit(gen: np.random.Generator, d: int, toward=None) -> np.ndarray:
    """Uniform unit vector; with ``toward`` given, redrawn until it has a
    nonnegative inner product with it."""
    while True:
        u = gen.standard_normal(d)
        u /= np.linalg.norm(u)
        if toward is None or u @ toward >= 0:
            return u


def init_radius(spec: ExperimentSpec, model: LatentModel) -> float:
    if spec.init_distance is not None:
        return spec.init_distance
    return spec.init_radius_frac * model.corollary_radius()


def draw_init(spec: ExperimentSpec, model: LatentModel, stream: RngStream, radius: float,
              count: int | None = None) -> np.ndarray:
    gen = stream.generator()
    toward = model.theta_star if spec.style == "toward-theta-star" else None
    k = 1 if count is None else count
    inits = np.array([model.theta_star + radius * random_unit(gen, model.d, toward)
                      for _ in range(k)])
    return inits[0] if count is None else inits


def sgd_radius(spec: ExperimentSpec, model: LatentModel, theta0) -> float:
    """Projection radius ``r`` (the ball has radius ``r/2`` around ``theta0``).

    Defaults to the corollary radius, widened when needed so that the
    projection ball still contains ``theta*``.
    """
    if spec.radius is not None:
        return spec.radius
    return max(model.corollary_radius(), 2.0 * float(np.linalg.norm(theta0 - model.theta_star)))


def solver_config(spec: ExperimentSpec, model: LatentModel, theta0=None) -> SolverConfig:
    if spec.algo in ("grad", "grad-split"):
        step = StepSchedule.constant(spec.step)
    elif spec.algo == "sgd":
        step = StepSchedule.decaying(spec.xi if spec.xi is not None else model.default_xi())
    else:
        step = None
    projection = None
    if spec.algo == "sgd":
        projection = BallSpec(theta0, sgd_radius(spec, model, theta0) / 2.0)
    split = spec.iters if spec.algo.endswith("-split") else None
    return SolverConfig(spec.algo, spec.iters, step, projection, split)


def reference_optimum(spec: ExperimentSpec, model: LatentModel, data) -> np.ndarray | None:
    """Fixed point reached from ``theta*`` by the full-data version of the algorithm."""
    if spec.algo == "sgd":
        return None
    alpha = spec.step if spec.algo.startswith("grad") else None
    return solvers.iterate_to_fixed_point(model, data, model.theta_star, alpha, REFERENCE_TOL)


@dataclass
class TrialOutcome:
    trial: int
    seed: int
    iters: np.ndarray
    opt_error: np.ndarray | None
    stat_error: np.ndarray
    kappa_fit: float
    plateau: float
    suggested_T: int
    phi: float = math.nan
    status: str = "ok"


def phi(model: LatentModel) -> float:
    """Noise-and-signal scale of the statistical rate; undefined for the missing model."""
    norm = float(np.linalg.norm(model.theta_star))
    if model.name == "gmm":
        return norm * math.sqrt(norm ** 2 + model.sigma ** 2)
    if model.name == "mor":
        return math.sqrt(model.sigma ** 2 + norm ** 2)
    return math.nan


def summarize(spec: ExperimentSpec, opt_error, stat_error) -> tuple[float, float, int]:
    kappa = curve_rate(opt_error, OPT_FLOOR) if opt_error is not None else math.nan
    try:
        plateau = detect_plateau(stat_error)
    except TooFewPoints:
        plateau = float(stat_error[-1])
    T = spec.iters
    if 0.0 < kappa < 1.0 and plateau > 0:
        # deviation proxy: the final error bound 2 eps / (1 - kappa) met at the plateau
        T = compute_suggested_T(kappa, float(stat_error[0]), (1.0 - kappa) * plateau / 2.0)
    return kappa, plateau, max(int(T), 1)


def run_trial(spec: ExperimentSpec, index: int) -> TrialOutcome:
    tr = make_trial(spec, index)
    model = tr.model
    try:
        theta0 = draw_init(spec, model, tr.stream.child("init"), init_radius(spec, model))
        config = solver_config(spec, model, theta0)
        if spec.algo == "sgd":
            data = None
            result = solvers.run(model, config, theta0, rng=tr.stream.child("sgd-samples"))
        else:
            data = model.sample(spec.n, tr.stream.child("data"))
            result = solvers.run(model, config, theta0, data=data)
            result.trace.theta_hat = reference_optimum(spec, model, data)
    except EMError as exc:
        log.warning("trial %d failed: %s", index, exc)
        return TrialOutcome(index, tr.seed, np.arange(0), None, np.empty(0),
                            math.nan, math.nan, 1, phi(model), status=f"failed: {exc}")
    trace = result.trace
    stat = trace.stat_error
    opt = trace.opt_error
    kappa, plateau, T = summarize(spec, opt, stat)
    return TrialOutcome(index, tr.seed, trace.iters, opt, stat, kappa, plateau, T, phi(model))


# --------------------------------------------------------------------------
# output helpers


def fmt(value) -> str:
    """Shortest round-trip decimal; empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


class AllTrialsFailed(EMError):
    pass


def _check_outcomes(outcomes):
    if outcomes and all(o.status != "ok" for o in outcomes):
        raise AllTrialsFailed("numerical failure in every trial")


# --------------------------------------------------------------------------
# experiments


def run_experiment(spec: ExperimentSpec) -> dict:
    """Per-trial traces (``trace.csv``), summaries (``summary.csv``) and plots."""
    out = Path(spec.out)
    outcomes = [run_trial(spec, k) for k in range(spec.trials)]
    rows = []
    for o in sorted(outcomes, key=lambda o: o.trial):
        for i, t in enumerate(o.iters):
            opt = o.opt_error[i] if o.opt_error is not None else None
            rows.append([spec.model, spec.algo, o.trial, int(t), opt, o.stat_error[i]])
    files = {"trace": write_csv(out / "trace.csv",
                                ["model", "algo", "trial", "iter", "opt_error", "stat_error"], rows)}
    files["summary"] = write_csv(
        out / "summary.csv",
        ["trial", "kappa_fit", "plateau", "suggested_T", "seed", "phi", "status"],
        [[o.trial, o.kappa_fit, o.plateau, o.suggested_T, o.seed, o.phi, o.status]
         for o in outcomes])
    if spec.plot and rows:
        files["opt_svg"] = emit_svg(files["trace"], PlotSpec("iter", "opt_error", logy=True,
                                                             group_by="trial"),
                                    out / "opt_error.svg")
        files["stat_svg"] = emit_svg(files["trace"], PlotSpec("iter", "stat_error", logy=True,
                                                              group_by="trial"),
                                     out / "stat_error.svg")
    _check_outcomes(outcomes)
    return {"files": files, "outcomes": outcomes}


def run_snr_sweep(spec: ExperimentSpec, snr_grid=None) -> dict:
    """Fitted optimization-error rate per SNR, averaged over trials."""
    grid = tuple(spec.snr_grid if snr_grid is None else snr_grid)
    if not grid or any(not s > 0 for s in grid):
        raise ConfigError("snr grid must be nonempty with positive values")
    out = Path(spec.out)
    rows, table = [], []
    all_outcomes = []
    for snr in grid:
        sub = spec.replace(snr=float(snr), theta_norm=None)
        outcomes = [run_trial(sub, k) for k in range(spec.trials)]
        all_outcomes += outcomes
        kappas = np.array([o.kappa_fit for o in outcomes if o.status == "ok"])
        kappas = kappas[~np.isnan(kappas)]
        mean = float(kappas.mean()) if kappas.size else math.nan
        sd = float(kappas.std(ddof=1)) if kappas.size > 1 else math.nan
        table.append((float(snr), mean, sd, int(kappas.size)))
        rows.append([float(snr), mean, sd, int(kappas.size)])
    files = {"sweep": write_csv(out / "snr_sweep.csv",
                                ["snr", "kappa_mean", "kappa_sd", "trials"], rows)}
    if spec.plot:
        files["svg"] = emit_svg(files["sweep"], PlotSpec("snr", "kappa_mean"), out / "snr_sweep.svg")
    _check_outcomes(all_outcomes)
    return {"files": files, "table": table}


@dataclass
class RocResult:
    theta_norm: float
    radius_hat: float
    success_fractions: list
    threshold: float


def _final_errors(spec, model, data, inits, alpha):
    """Final ``|theta^T - theta*|`` from each initialization; failures count as inf."""
    finals = np.empty(len(inits))
    for k, theta0 in enumerate(inits):
        try:
            config = solver_config(spec, model, theta0)
            res = solvers.run(model, config, theta0, data=data)
            finals[k] = np.linalg.norm(res.final_theta - model.theta_star)
        except EMError:
            finals[k] = np.inf
    return finals


def radius_of_convergence(spec: ExperimentSpec, theta_norm: float,
                          inits_per_radius: int | None = None) -> RocResult:
    """Bisection for the largest initialization radius with >= 90% successes.

    A run succeeds when its final distance to ``theta*`` is at most
    ``max(2 * reference plateau, 0.05 |theta*| + 0.05 sigma)``, the
    reference being a run started at ``theta*``.
    """
    if spec.algo == "sgd":
        raise ConfigError("radius of convergence is defined for the batch algorithms")
    k_inits = spec.inits_per_radius if inits_per_radius is None else inits_per_radius
    tr = make_trial(spec, 0, norm=theta_norm)
    model = tr.model
    data = model.sample(spec.n, tr.stream.child("data"))
    ref_cfg = solver_config(spec, model, model.theta_star)
    ref = solvers.run(model, ref_cfg, model.theta_star, data=data)
    ref_plateau = detect_plateau(ref.trace.stat_error) if spec.iters >= 5 else \
        float(ref.trace.stat_error[-1])
    threshold = max(2.0 * ref_plateau, 0.05 * theta_norm + 0.05 * spec.sigma)

    fractions = [(0.0, 1.0)]  # every initialization is theta* itself

    def success(radius, step):
        inits = draw_init(spec, model, tr.stream.child("roc-init", step), radius, k_inits)
        finals = _final_errors(spec, model, data, inits, spec.step)
        frac = float(np.mean(finals <= threshold))
        fractions.append((float(radius), frac))
        return frac >= 0.9

    lo, hi = 0.0, 2.0 * theta_norm + 2.0 * spec.sigma
    if success(hi, 0):
        lo = hi
    else:
        for b in range(spec.bisections):
            mid = 0.5 * (lo + hi)
            if success(mid, b + 1):
                lo = mid
            else:
                hi = mid
    return RocResult(float(theta_norm), lo, fractions, threshold)


def run_roc(spec: ExperimentSpec, theta_norm_grid=None, inits_per_radius=None) -> dict:
    grid = tuple(spec.theta_norms if theta_norm_grid is None else theta_norm_grid)
    if not grid:
        raise ConfigError("theta norm grid must be nonempty")
    out = Path(spec.out)
    results = [radius_of_convergence(spec, float(v), inits_per_radius) for v in grid]
    rows = [[spec.model, r.theta_norm, rad, frac, r.radius_hat]
            for r in results for rad, frac in r.success_fractions]
    files = {"roc": write_csv(out / "roc.csv",
                              ["model", "theta_norm", "radius", "success_fraction", "radius_hat"],
                              rows)}
    # the search protocol is an artifact choice, so it is recorded next to the results
    k_inits = spec.inits_per_radius if inits_per_radius is None else inits_per_radius
    files["roc_summary"] = write_csv(
        out / "roc_summary.csv",
        ["model", "theta_norm", "radius_hat", "threshold", "inits_per_radius", "bisections",
         "init_style", "algo"],
        [[spec.model, r.theta_norm, r.radius_hat, r.threshold, k_inits, spec.bisections,
          spec.style, spec.algo] for r in results])
    if spec.plot:
        files["svg"] = emit_svg(files["roc_summary"], PlotSpec("theta_norm", "radius_hat"),
                                out / "roc.svg")
        files["fractions_svg"] = emit_svg(
            files["roc"], PlotSpec("radius", "success_fraction", group_by="theta_norm"),
            out / "roc_fractions.svg")
    return {"files": files, "results": results}


def run_sgd_experiment(spec: ExperimentSpec) -> dict:
    """Stochastic gradient EM traces and per-trial log-log slopes.

    Without an explicit ``init_distance`` the runs start at distance ``sigma``
    from ``theta*``.
    """
    if spec.algo != "sgd":
        spec = spec.replace(algo="sgd")
    if spec.init_distance is None:
        spec = spec.replace(init_distance=spec.sigma)
    out = Path(spec.out)
    outcomes = [run_trial(spec, k) for k in range(spec.trials)]
    rows, slopes = [], []
    for o in outcomes:
        for i, t in enumerate(o.iters):
            rows.append([spec.model, spec.algo, o.trial, int(t), None, o.stat_error[i]])
        try:
            slope = loglog_slope(o.stat_error, spec.slope_t_min)
        except TooFewPoints:
            slope = math.nan
        slopes.append([o.trial, slope, o.plateau, o.seed, o.status])
    files = {"trace": write_csv(out / "trace.csv",
                                ["model", "algo", "trial", "iter", "opt_error", "stat_error"], rows)}
    files["summary"] = write_csv(out / "sgd_summary.csv",
                                 ["trial", "slope", "final_window_median", "seed", "status"], slopes)
    if spec.plot and rows:
        files["svg"] = emit_svg(files["trace"], PlotSpec("iter", "stat_error", logy=True, logx=True,
                                                         group_by="trial", max_points=400),
                                out / "stat_error.svg")
    _check_outcomes(outcomes)
    return {"files": files, "outcomes": outcomes,
            "slopes": np.array([s[1] for s in slopes], dtype=float)}


def run_conditions(spec: ExperimentSpec) -> dict:
    """Monte-Carlo condition estimates over the (default) corollary ball."""
    tr = make_trial(spec, 0)
    model = tr.model
    radius = spec.radius if spec.radius is not None else model.corollary_radius()
    probe = ProbeSpec(radius, tr.stream.child("conditions"), spec.num_probes, spec.mc_n)
    alpha = spec.step if spec.algo.startswith("grad") else 1.0
    kind = "grad" if spec.algo.startswith("grad") else "em"
    est = estimate_conditions(model, probe, kind, alpha)
    key = spec.omega if spec.model == "missing" else model.snr
    header = ["model", "snr_or_omega", "radius", "lambda", "mu", "gamma_fos", "gamma_gs",
              "kappa_hat", "xi", "sigma_g_sq", "stderr", "stderr_hessian", "stderr_gamma_fos",
              "stderr_gamma_gs", "stderr_sigma_g_sq"]
    row = [spec.model, key, radius, est.lam, est.mu, est.gamma_fos, est.gamma_gs, est.kappa,
           est.xi, est.sigma_g_sq, est.stderr["kappa"], est.stderr["hessian"],
           est.stderr["gamma_fos"], est.stderr["gamma_gs"], est.stderr["sigma_g_sq"]]
    files = {"conditions": write_csv(Path(spec.out) / "conditions.csv", header, [row])}
    return {"files": files, "estimate": est}
