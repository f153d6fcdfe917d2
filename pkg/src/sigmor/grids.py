"""Uniform time grids.

All trajectories, controls and quadratures in this package live on uniform
grids t_0 = 0 < t_1 < ... < t_{L-1} = T. Non-uniform grids are rejected
everywhere, so the validation lives in one place.
"""

import numpy as np

# Relative slack when checking that grid increments are all equal.
_UNIFORMITY_RTOL = 1e-9


def uniform_grid(horizon: float, points: int) -> np.ndarray:
    """Uniform grid of `points` samples on [0, horizon]."""
    if horizon <= 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if points < 2:
        raise ValueError(f"a grid needs at least 2 points, got {points}")
    return np.linspace(0.0, float(horizon), int(points))


def grid_step(grid: np.ndarray) -> float:
    """Validate uniformity and return the grid step.

    Raises ValueError for grids with fewer than 2 points, non-increasing
    grids, or increments that differ by more than a relative tolerance.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-d array with at least 2 points")
    steps = np.diff(grid)
    h = float(steps[0])
    if h <= 0.0:
        raise ValueError("grid must be strictly increasing")
    if np.max(np.abs(steps - h)) > _UNIFORMITY_RTOL * max(h, abs(grid[-1])):
        raise ValueError("grid is not uniform")
    return h


def grids_match(a: np.ndarray, b: np.ndarray) -> bool:
    """Whether two grids are identical up to floating-point noise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        return False
    scale = max(abs(float(a[-1])), 1.0)
    return bool(np.max(np.abs(a - b)) <= 1e-12 * scale)
