"""Regularity reports: dyadic radius tables with log-log power-law fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class RegularityReport:
    """Measured quantity per radius plus a fitted power law.

    The fit is least squares on (log r, log value), excluding radii below the
    discretization floor (8h by default) and nonpositive values.  When fewer
    than two points survive, the fitted fields are NaN.
    """

    center: tuple[float, ...]
    radii: list[float]
    values: list[float]
    fitted_exponent: float
    fitted_constant: float
    residual: float
    floor: float
    defect: float | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "center": list(self.center),
            "radii": list(self.radii),
            "values": list(self.values),
            "fitted_exponent": self.fitted_exponent,
            "fitted_constant": self.fitted_constant,
            "residual": self.residual,
            "floor": self.floor,
        }
        if self.defect is not None:
            out["defect"] = self.defect
        if self.seed is not None:
            out["seed"] = self.seed
        if self.meta:
            out["meta"] = self.meta
        return out


def fit_loglog(radii: Sequence[float], values: Sequence[float], floor: float) -> tuple[float, float, float]:
    """Fit value ~ C * r^alpha by least squares in log-log coordinates.

    Returns (alpha, C, residual) where residual is the max absolute deviation
    of log(value) from the fit over the used points; (nan, nan, 0) if fewer
    than two usable points remain above the floor.
    """
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    use = (r >= floor - 1e-12) & (v > 0.0)
    if int(np.sum(use)) < 2:
        return math.nan, math.nan, 0.0
    lr = np.log(r[use])
    lv = np.log(v[use])
    alpha, logc = np.polyfit(lr, lv, 1)
    resid = float(np.max(np.abs(lv - (alpha * lr + logc))))
    return float(alpha), float(math.exp(logc)), resid


def make_report(
    center: Sequence[float],
    radii: Sequence[float],
    values: Sequence[float],
    floor: float,
    **extra,
) -> RegularityReport:
    order = np.argsort(np.asarray(radii))[::-1]
    radii = [float(np.asarray(radii)[i]) for i in order]
    values = [float(np.asarray(values)[i]) for i in order]
    alpha, c, resid = fit_loglog(radii, values, floor)
    return RegularityReport(
        center=tuple(float(x) for x in np.atleast_1d(center)),
        radii=radii,
        values=values,
        fitted_exponent=alpha,
        fitted_constant=c,
        residual=resid,
        floor=floor,
        **extra,
    )
