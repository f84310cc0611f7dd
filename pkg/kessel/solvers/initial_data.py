"""
Initial data profiles
Analytic u₀ sampled at cell centers; every profile must be nonnegative with positive mass.
"""

from typing import Any, Callable, Dict, Mapping

import numpy as np

from kessel.mesh.geometry import DomainKind, Field, Grid, integrate
from kessel.utils.errors import ConfigError
from kessel.utils.logger import get_logger

logger = get_logger(__name__)


def _lower_corner(grid: Grid) -> np.ndarray:
    bounds = grid.domain.bounds
    if grid.domain.kind is DomainKind.RECTANGLE:
        return np.array([bounds[0], bounds[2]])
    if grid.domain.kind is DomainKind.INTERVAL:
        return np.array([bounds[0]])
    return np.array([0.0])


def _extent(grid: Grid) -> np.ndarray:
    bounds = grid.domain.bounds
    if grid.domain.kind is DomainKind.RECTANGLE:
        return np.array([bounds[1] - bounds[0], bounds[3] - bounds[2]])
    if grid.domain.kind is DomainKind.INTERVAL:
        return np.array([bounds[1] - bounds[0]])
    return np.array([bounds[0]])


def _constant(grid: Grid, value: float = 1.0) -> np.ndarray:
    return np.full(grid.n_cells, float(value))


def _cosine(grid: Grid, base: float = 1.0, amplitude: float = 0.5, mode: int = 1) -> np.ndarray:
    scaled = (grid.cell_centers - _lower_corner(grid)) / _extent(grid)
    return base + amplitude * np.prod(np.cos(mode * np.pi * scaled), axis=1)


def _gaussian(grid: Grid, base: float = 1.0, amplitude: float = 4.0, width: float = 0.3,
              center: Any = None) -> np.ndarray:
    if center is None:
        if grid.domain.kind is DomainKind.RADIAL_BALL:
            center = [0.0]
        else:
            center = _lower_corner(grid) + 0.5 * _extent(grid)
    center = np.atleast_1d(np.asarray(center, dtype=float))
    dist_sq = np.sum((grid.cell_centers - center) ** 2, axis=1)
    return base + amplitude * np.exp(-dist_sq / (2.0 * width ** 2))


def _radial_spike(grid: Grid, base: float = 0.1, amplitude: float = 50.0, width: float = 0.05) -> np.ndarray:
    dist_sq = np.sum((grid.cell_centers - _lower_corner(grid)) ** 2, axis=1)
    return base + amplitude * np.exp(-dist_sq / (2.0 * width ** 2))


PROFILES: Dict[str, Callable[..., np.ndarray]] = {
    'constant': _constant,
    'cosine': _cosine,
    'gaussian': _gaussian,
    'radial_spike': _radial_spike,
}


def build_initial_data(grid: Grid, profile: str, params: Mapping[str, Any] = None) -> Field:
    """
    Sample a named profile on the grid.

    Args:
        grid: Target grid
        profile: One of PROFILES
        params: Keyword parameters of the profile

    Returns:
        u₀ as a Field

    Raises:
        ConfigError: unknown profile or parameters, negative values, zero mass
    """
    if profile not in PROFILES:
        raise ConfigError(f"Unknown initial profile '{profile}', expected one of {sorted(PROFILES)}")

    try:
        values = PROFILES[profile](grid, **dict(params or {}))
    except TypeError as e:
        raise ConfigError(f"Bad parameters for initial profile '{profile}': {e}") from e

    u0 = Field(values, grid)
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"Initial profile '{profile}' is not finite")
    if u0.min() < 0.0:
        raise ConfigError(f"Initial profile '{profile}' is negative (min {u0.min():.3g}); u₀ must be >= 0")
    mass = integrate(u0)
    if not mass > 0.0:
        raise ConfigError(f"Initial profile '{profile}' has no mass; ∫u₀ must be > 0")

    logger.debug(f"Initial data '{profile}': mass={mass:.6g}, max={u0.max():.4g}")
    return u0
