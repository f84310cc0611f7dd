import numpy as np
import pytest

from kessel.mesh.geometry import Domain, Field, build_grid


@pytest.fixture
def interval_grid():
    return build_grid(Domain.interval(0.0, np.pi), 64)


@pytest.fixture
def rectangle_grid():
    return build_grid(Domain.rectangle(0.0, 1.0, 0.0, 2.0), (12, 16))


@pytest.fixture(params=[2, 3])
def radial_grid(request):
    return build_grid(Domain.radial_ball(1.0, request.param), 48)


@pytest.fixture
def random_density():
    rng = np.random.default_rng(7)

    def _make(grid):
        return Field(0.5 + rng.random(grid.n_cells), grid)

    return _make


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv('KESSEL_OUT_DIR', str(tmp_path / 'runs'))
    return tmp_path / 'runs'


def _small_config(**sections):
    """Config dict for a short interval run; sections override defaults key by key"""
    config = {
        'domain': {'kind': 'interval', 'bounds': [0.0, float(np.pi)], 'resolution': 32, 'n_eff': 2},
        'initial_data': {'profile': 'cosine', 'params': {'base': 1.0, 'amplitude': 0.5}},
        'model': {'chi': 0.5, 'eps': 0.1},
        'time': {'T': 0.05, 'dt_max': 1e-3, 'output_interval': 0.0025},
    }
    for name, values in sections.items():
        config.setdefault(name, {}).update(values)
    return config


@pytest.fixture
def make_config():
    return _small_config
