"""Exponential-rate fits for decay curves."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceError

FLOOR = 1e-14


def fit_rate(ns, gaps, min_points: int = 6, floor: float = FLOOR) -> dict:
    """Least-squares slope of log(gap) against n, ignoring values at the float floor.

    Returns rate (exp of the slope), the log-space intercept, the residual rms
    and the points used; raises when fewer than `min_points` usable points remain.
    """
    pts = [(n, g) for n, g in zip(ns, gaps) if g > floor]
    if len(pts) < min_points:
        raise ConvergenceError(
            f"only {len(pts)} usable points above the float floor; need {min_points}"
        )
    xs = np.array([p[0] for p in pts], dtype=float)
    ys = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = float(np.sqrt(np.mean((ys - (slope * xs + intercept)) ** 2)))
    return {
        "rate": math.exp(slope),
        "log_intercept": float(intercept),
        "residual_rms": resid,
        "points": len(pts),
    }
