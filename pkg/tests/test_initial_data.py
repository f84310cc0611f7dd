import numpy as np
import pytest

from kessel.mesh.geometry import integrate
from kessel.solvers.initial_data import PROFILES, build_initial_data
from kessel.utils.errors import ConfigError


@pytest.mark.parametrize("profile", sorted(PROFILES))
def test_profiles_are_admissible(profile, interval_grid, rectangle_grid, radial_grid):
    for grid in (interval_grid, rectangle_grid, radial_grid):
        u0 = build_initial_data(grid, profile)
        assert u0.min() >= 0
        assert integrate(u0) > 0


def test_gaussian_center_list(rectangle_grid):
    u0 = build_initial_data(rectangle_grid, 'gaussian', {'center': [0.0, 0.0], 'width': 0.1})
    assert np.argmax(u0.values) == 0


def test_rejections(interval_grid):
    with pytest.raises(ConfigError, match="Unknown"):
        build_initial_data(interval_grid, 'sawtooth')
    with pytest.raises(ConfigError, match="negative"):
        build_initial_data(interval_grid, 'cosine', {'base': 0.0, 'amplitude': 1.0})
    with pytest.raises(ConfigError, match="mass"):
        build_initial_data(interval_grid, 'constant', {'value': 0.0})
    with pytest.raises(ConfigError, match="Bad parameters"):
        build_initial_data(interval_grid, 'constant', {'height': 1.0})
