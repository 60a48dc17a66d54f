"""Least-squares line fits used by every rate and exponent estimate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    n_points: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def fit_line(x, y) -> LineFit:
    """Ordinary least squares y = slope x + intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return LineFit(float("nan"), float("nan"), float("nan"), float("nan"), len(x))
    if np.ptp(y) == 0:
        # a flat line explains nothing about a power law
        return LineFit(0.0, float(y[0]), 0.0, 0.0, len(x))
    res = stats.linregress(x, y)
    se = float(res.stderr) if len(x) > 2 else float("nan")
    return LineFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), se, len(x))


def geometric_ratio(values) -> LineFit:
    """Fit log(values) against the index; exp(slope) is the decay ratio."""
    v = np.asarray(values, dtype=float)
    keep = v > 0
    return fit_line(np.arange(len(v))[keep], np.log(v[keep]))
