"""Shared numeric primitives: RNG streams, SPD solves, ball projection,
iteration traces and solver configuration records.

Parameter vectors are plain 1-D float64 numpy arrays throughout.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class EMError(Exception):
    """Base class for numerical failures raised by this package."""


class NotPositiveDefinite(EMError):
    """A design/second-moment matrix failed the SPD pivot test."""


class EmptyData(EMError, ValueError):
    pass


class BatchTooSmall(EMError, ValueError):
    pass


class ConfigError(ValueError):
    pass


_MASK64 = (1 << 64) - 1


def _label_words(label: str) -> list[int]:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, label, index)``.

    Every call to :meth:`generator` restarts the stream from its first draw,
    so any consumer handed the same stream sees the same numbers.
    """

    master_seed: int
    label: str
    index: int = 0

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("stream index must be nonnegative")

    def _seed_sequence(self) -> np.random.SeedSequence:
        seed = int(self.master_seed) & _MASK64
        entropy = [seed & 0xFFFFFFFF, seed >> 32, *_label_words(self.label),
                   int(self.index) & 0xFFFFFFFF, int(self.index) >> 32]
        return np.random.SeedSequence(entropy)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self._seed_sequence()))

    def child(self, label: str, index: int = 0) -> "RngStream":
        return RngStream(self.master_seed, f"{self.label}[{self.index}]/{label}", index)

    def normal(self, size) -> np.ndarray:
        return self.generator().standard_normal(size)

    def uniform(self, size) -> np.ndarray:
        return self.generator().random(size)

    def bits(self, size) -> np.ndarray:
        return self.generator().integers(0, 2, size=size).astype(bool)

    def derived_seed(self) -> int:
        """A 64-bit integer seed unique to this stream."""
        state = self._seed_sequence().generate_state(2, dtype=np.uint32)
        return int(state[0]) | (int(state[1]) << 32)


def derive_stream(master_seed: int, label: str, index: int = 0) -> RngStream:
    return RngStream(int(master_seed), label, int(index))


def solve_spd(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` by Cholesky.

    Raises NotPositiveDefinite when any pivot falls below
    ``1e-12 * trace(A) / d``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d = A.shape[0]
    if A.shape != (d, d) or b.shape[0] != d:
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    tol = 1e-12 * np.trace(A) / d
    try:
        factor = cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(factor[0]) ** 2
    if not np.all(pivots > tol):
        j = int(np.argmin(pivots))
        raise NotPositiveDefinite(
            f"pivot {pivots[j]:.3e} at column {j} is below {tol:.3e}")
    return cho_solve(factor, b, check_finite=False)


@dataclass(frozen=True)
class BallSpec:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


def project_ball(theta, ball: BallSpec) -> np.ndarray:
    """Euclidean projection of ``theta`` onto the closed ball."""
    theta = np.asarray(theta, dtype=float)
    diff = theta - ball.center
    dist = np.linalg.norm(diff)
    if dist <= ball.radius:
        return theta
    if ball.radius == 0.0:
        return ball.center.copy()
    scale = ball.radius / dist
    out = ball.center + scale * diff
    # rounding can leave the rescaled point a hair outside
    while np.linalg.norm(out - ball.center) > ball.radius:
        scale = np.nextafter(scale, 0.0)
        out = ball.center + scale * diff
    return out


@dataclass(frozen=True)
class StepSchedule:
    """Constant step ``alpha`` or decaying ``a / (xi * (t + 2))``."""

    kind: str
    alpha: float = 1.0
    a: float = 1.5
    xi: float = 1.0

    def __post_init__(self):
        if self.kind == "constant":
            ok = np.isfinite(self.alpha) and self.alpha > 0
        elif self.kind == "decaying":
            ok = all(np.isfinite(v) and v > 0 for v in (self.a, self.xi))
        else:
            raise ConfigError(f"unknown step schedule kind {self.kind!r}")
        if not ok:
            raise ConfigError(f"step schedule parameters must be positive: {self}")

    @classmethod
    def constant(cls, alpha: float) -> "StepSchedule":
        return cls("constant", alpha=alpha)

    @classmethod
    def decaying(cls, xi: float, a: float = 1.5) -> "StepSchedule":
        return cls("decaying", a=a, xi=xi)

    def __call__(self, t: int) -> float:
        if self.kind == "constant":
            return self.alpha
        return self.a / (self.xi * (t + 2))


ALGORITHMS = ("em", "em-split", "grad", "grad-split", "sgd")


@dataclass(frozen=True)
class SolverConfig:
    algo: str
    iters: int
    step: Optional[StepSchedule] = None
    projection: Optional[BallSpec] = None
    split_batches: Optional[int] = None

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}")
        if self.iters < 0:
            raise ConfigError("iteration budget must be nonnegative")
        if self.algo in ("grad", "grad-split", "sgd") and self.step is None:
            raise ConfigError(f"{self.algo} needs a step schedule")
        if self.algo == "sgd" and self.projection is None:
            raise ConfigError("sgd needs a projection ball")
        if self.algo.endswith("-split") and self.split_batches != self.iters:
            raise ConfigError("split algorithms need split_batches == iters")


@dataclass
class Trace:
    """Iterates ``theta^0 .. theta^T`` with errors against references.

    ``opt_error`` is only available once a reference optimum ``theta_hat``
    is attached.
    """

    thetas: np.ndarray
    theta_star: Optional[np.ndarray] = None
    theta_hat: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.thetas)

    @property
    def iters(self) -> np.ndarray:
        return np.arange(len(self.thetas))

    @property
    def stat_error(self) -> np.ndarray:
        if self.theta_star is None:
            raise ValueError("trace has no theta_star attached")
        return np.linalg.norm(self.thetas - self.theta_star, axis=1)

    @property
    def opt_error(self) -> Optional[np.ndarray]:
        if self.theta_hat is None:
            return None
        return np.linalg.norm(self.thetas - self.theta_hat, axis=1)


@dataclass
class RunResult:
    trace: Trace
    config: SolverConfig
    extra: dict = field(default_factory=dict)

    @property
    def final_theta(self) -> np.ndarray:
        return self.trace.thetas[-1]
