"""Log-log least-squares power-law fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class PowerLawFit:
    """value ~ exp(intercept) * scale^slope; residual is the RMS of the log residuals."""

    slope: float
    intercept: float
    residual: float
    points: tuple

    def predict(self, scale) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(scale, dtype=float) ** self.slope


def power_law_fit(pairs) -> PowerLawFit:
    """Unweighted least squares of log(value) on log(scale) over (scale, value) pairs."""
    pairs = [(float(s), float(v)) for s, v in pairs]
    if len(pairs) < 3:
        raise ParameterError(f"a power-law fit needs at least 3 points, got {len(pairs)}")
    if any(s <= 0 or v <= 0 or not np.isfinite(v) for s, v in pairs):
        raise ParameterError("power-law fits need positive finite scales and values")
    x = np.log([s for s, _ in pairs])
    y = np.log([v for _, v in pairs])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ [slope, intercept] - y) ** 2)))
    return PowerLawFit(float(slope), float(intercept), res, tuple(zip(x.tolist(), y.tolist())))
