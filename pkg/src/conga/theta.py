"""Choice of the transform exponent by covariance matching.

``theta`` is picked to minimise ``||cov(F_theta(X)) - cov(X)||_F`` where both
sample covariances use the ``n - 1`` denominator on the raw columns.  The
search is a coarse grid scan followed by bounded Brent refinement on the
interval bracketing the best grid point.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InsufficientDataError, ParameterError
from .model import as_count_matrix, edge_transform

log = logging.getLogger(__name__)

# objective ranges below this are treated as flat
_FLAT_TOL = 1e-14


@dataclass(frozen=True)
class ThetaSearchConfig:
    lower: float = 0.05
    upper: float = 8.0
    tolerance: float = 1e-4
    grid_points: int = 200

    def __post_init__(self):
        if not (0 < self.lower < self.upper):
            raise ParameterError("need 0 < lower < upper")
        if not self.tolerance > 0:
            raise ParameterError("tolerance must be positive")
        if self.grid_points < 3:
            raise ParameterError("grid_points must be at least 3")

    def grid(self):
        return np.linspace(self.lower, self.upper, self.grid_points)

    @property
    def spacing(self):
        return (self.upper - self.lower) / (self.grid_points - 1)


@dataclass
class ThetaSelection:
    theta: float
    objective: float
    degenerate: bool
    grid: np.ndarray
    curve: np.ndarray

    @property
    def interior_minima(self):
        return count_interior_minima(self.curve)


def _checked(data):
    data = as_count_matrix(data)
    if data.shape[0] < 2:
        raise InsufficientDataError("covariance matching needs at least 2 observations")
    return data


def covariance_discrepancy(data, theta):
    """Frobenius norm of ``cov(F(X)) - cov(X)``."""
    data = _checked(data)
    return _discrepancy(data.astype(float), np.cov(data, rowvar=False, ddof=1), theta)


def _discrepancy(x, cov_x, theta):
    cov_f = np.cov(edge_transform(x, theta), rowvar=False, ddof=1)
    return float(np.linalg.norm(np.atleast_2d(cov_f - cov_x), "fro"))


def discrepancy_curve(data, thetas):
    data = _checked(data)
    x = data.astype(float)
    cov_x = np.cov(x, rowvar=False, ddof=1)
    return np.array([_discrepancy(x, cov_x, t) for t in thetas])


def count_interior_minima(curve):
    """Number of strict local minima of a sampled curve, excluding the endpoints.

    A run of equal values counts once, as a minimum when both neighbours of the
    run are higher.
    """
    curve = np.asarray(curve, dtype=float)
    # collapse plateaus
    keep = np.concatenate([[True], np.diff(curve) != 0])
    c = curve[keep]
    if c.size < 3:
        return 0
    inner = (c[1:-1] < c[:-2]) & (c[1:-1] < c[2:])
    return int(inner.sum())


def select_theta(data, config=None):
    """Minimise the covariance discrepancy over ``[config.lower, config.upper]``.

    A flat objective (for example all-constant columns) returns
    ``config.lower`` with ``degenerate=True``.
    """
    config = config or ThetaSearchConfig()
    data = _checked(data)
    x = data.astype(float)
    cov_x = np.cov(x, rowvar=False, ddof=1)
    grid = config.grid()
    curve = np.array([_discrepancy(x, cov_x, t) for t in grid])

    if curve.max() - curve.min() <= _FLAT_TOL:
        log.warning("covariance discrepancy is flat in theta; returning lower bound")
        return ThetaSelection(config.lower, float(curve[0]), True, grid, curve)

    k = int(np.argmin(curve))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(
        lambda t: _discrepancy(x, cov_x, t),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": config.tolerance},
    )
    theta, value = float(res.x), float(res.fun)
    if value > curve[k]:
        theta, value = float(grid[k]), float(curve[k])
    return ThetaSelection(theta, value, False, grid, curve)
