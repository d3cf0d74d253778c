"""Power-law rate fits on log-log axes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = ["RateFit", "fit_rate"]


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit ``log err = slope log N + intercept``.

    ``residual`` is the RMS of the log residuals and ``half_width`` the 95%
    confidence half-width of the slope (``inf`` with only two points).
    """

    N: tuple
    errors: tuple
    slope: float
    intercept: float
    residual: float
    half_width: float

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi

    def to_dict(self) -> dict:
        return {"N": list(self.N), "errors": list(self.errors), "slope": self.slope,
                "intercept": self.intercept, "residual": self.residual,
                "half_width": self.half_width}


def fit_rate(points) -> RateFit:
    """Fit a rate to ``(N, error)`` pairs; needs at least 3 points with positive errors."""
    pts = sorted((float(n), float(e)) for n, e in points)
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    N = np.array([p[0] for p in pts])
    err = np.array([p[1] for p in pts])
    if np.any(N <= 0) or np.any(err <= 0) or not np.all(np.isfinite(err)):
        raise ValueError("N and errors must be positive and finite")
    res = stats.linregress(np.log(N), np.log(err))
    pred = res.intercept + res.slope * np.log(N)
    resid = float(np.sqrt(np.mean((np.log(err) - pred) ** 2)))
    dof = len(N) - 2
    half = float(stats.t.ppf(0.975, dof) * res.stderr) if dof > 0 else float("inf")
    return RateFit(tuple(N.tolist()), tuple(err.tolist()), float(res.slope),
                   float(res.intercept), resid, half)
