"""Least squares on log-log data."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError, InsufficientDataError


class PowerLawFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def fit_exponent(pairs: Sequence[tuple[float, float]]) -> PowerLawFit:
    """OLS fit of ``log y = intercept + slope * log x``.

    A constant ``y`` yields slope 0 and ``r2 = 1`` by convention.
    """
    if len(pairs) < 3:
        raise InsufficientDataError(f"need at least 3 points for a log-log fit, got {len(pairs)}")
    xy = np.asarray(pairs, dtype=float)
    if np.any(~np.isfinite(xy)) or np.any(xy <= 0):
        raise DomainError("log-log fit needs strictly positive finite coordinates")
    lx, ly = np.log(xy[:, 0]), np.log(xy[:, 1])
    if np.ptp(lx) == 0:
        raise DomainError("all x values coincide; slope undefined")
    if np.ptp(ly) == 0:
        return PowerLawFit(0.0, float(ly[0]), 1.0)
    res = stats.linregress(lx, ly)
    return PowerLawFit(float(res.slope), float(res.intercept), float(res.rvalue**2))
