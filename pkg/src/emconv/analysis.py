"""Curve summaries used by the experiment harness."""

from __future__ import annotations

import math

import numpy as np


class TooFewPoints(ValueError):
    pass


def fit_geometric_rate(errors, floor: float = 1e-11) -> float:
    """Geometric rate of a decaying error curve.

    Fits a least-squares line to ``log(error)`` against iteration over the
    leading run of entries above ``floor`` and returns ``exp(slope)``.
    """
    errors = np.asarray(errors, dtype=float)
    below = np.nonzero(~(errors > floor))[0]
    head = errors[: below[0]] if below.size else errors
    if head.size < 3:
        raise TooFewPoints(f"only {head.size} entries above floor {floor:g}")
    t = np.arange(head.size, dtype=float)
    slope = np.polyfit(t, np.log(head), 1)[0]
    return float(np.exp(slope))


def curve_rate(errors, floor: float = 1e-11) -> float:
    """:func:`fit_geometric_rate` that tolerates curves hitting the floor
    within two steps: the first three entries are then fitted with values
    clamped at ``floor``. Returns NaN for curves shorter than three."""
    errors = np.asarray(errors, dtype=float)
    try:
        return fit_geometric_rate(errors, floor)
    except TooFewPoints:
        if errors.size < 3 or not errors[0] > floor:
            return math.nan
        return fit_geometric_rate(np.maximum(errors[:3], floor), floor / 2.0)


def detect_plateau(errors, window: int = 5) -> float:
    """Median of the last ``window`` entries."""
    errors = np.asarray(errors, dtype=float)
    if window < 1 or errors.size < window:
        raise TooFewPoints(f"need {window} entries, got {errors.size}")
    return float(np.median(errors[-window:]))


def compute_suggested_T(kappa: float, init_error: float, deviation: float) -> int:
    """Smallest ``T >= log_{1/kappa}((1 - kappa) init_error / deviation)``, at least 1."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    arg = (1.0 - kappa) * init_error / deviation
    if arg <= 1.0:
        return 1
    raw = math.log(arg) / math.log(1.0 / kappa)
    # guard against 9.999999 style rounding of an exact integer
    T = math.ceil(raw - 1e-9)
    return max(1, T)


def loglog_slope(errors, t_min: int = 100, t_max: int | None = None) -> float:
    """Least-squares slope of ``log(error)`` against ``log(t)`` over ``t_min <= t <= t_max``."""
    errors = np.asarray(errors, dtype=float)
    t_max = errors.size - 1 if t_max is None else t_max
    t = np.arange(errors.size)
    sel = (t >= max(t_min, 1)) & (t <= t_max) & (errors > 0)
    if sel.sum() < 2:
        raise TooFewPoints("not enough iterations in the slope window")
    return float(np.polyfit(np.log(t[sel]), np.log(errors[sel]), 1)[0])
