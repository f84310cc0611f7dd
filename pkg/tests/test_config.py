import json

import pytest
import yaml

from kessel.config.manager import RunConfig, apply_override, parse_config
from kessel.utils.errors import ConfigError, SupercriticalChi


def test_defaults_resolve():
    config = parse_config()
    assert isinstance(config, RunConfig)
    assert config.run.mode == 'simulate'
    assert config.undershoot_policy == 'abort'
    assert config.to_params().p == pytest.approx(2.0 / 3.0)


def test_yaml_file(tmp_path, make_config):
    path = tmp_path / 'run.yaml'
    path.write_text(yaml.safe_dump(make_config(model={'chi': 0.8})))
    config = parse_config(path)
    assert config.model.chi == 0.8
    assert config.build_grid().n_cells == 32


def test_unknown_keys_rejected(make_config):
    with pytest.raises(ConfigError, match="model"):
        parse_config(make_config(model={'chii': 1.0}))
    with pytest.raises(ConfigError):
        parse_config({'solver': {}})
    with pytest.raises(ConfigError, match="Invalid config key"):
        apply_override({}, 'model.kappa', 1.0)


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        parse_config('/nonexistent/run.yaml')


def test_supercritical_gate(make_config):
    data = make_config(domain={'kind': 'radial_ball', 'bounds': [1.0], 'resolution': 32, 'n_eff': 3},
                       initial_data={'profile': 'gaussian', 'params': {}},
                       model={'chi': 3.0})
    with pytest.raises(SupercriticalChi, match="n/\\(n-2\\)"):
        parse_config(data)

    config = parse_config(data, {'run.allow_supercritical': True})
    assert config.exploratory
    params = config.to_params()
    assert not params.enforce_gate
    assert params.p == pytest.approx(2.0 / 9.0)


def test_parameter_gates(make_config):
    with pytest.raises(ConfigError):
        parse_config(make_config(model={'eps': 1.5}))
    with pytest.raises(ConfigError, match="decreasing"):
        parse_config(make_config(sweep={'eps_list': [0.1, 0.2]}))
    with pytest.raises(ConfigError, match="negative"):
        parse_config(make_config(initial_data={'profile': 'cosine', 'params': {'base': 0.0, 'amplitude': 1.0}}))
    with pytest.raises(ConfigError):
        parse_config(make_config(domain={'resolution': 2}))


def test_overrides_and_profile(make_config):
    config = parse_config(make_config(), {'model.chi': 0.9, 'run.profile': 'exploratory', 'model.eps': None})
    assert config.model.chi == 0.9
    assert config.model.eps == 0.1
    assert config.exploratory
    assert config.undershoot_policy == 'clamp'


def test_meta_document_reloads(tmp_path, make_config, monkeypatch):
    monkeypatch.setenv('KESSEL_OUT_DIR', str(tmp_path))
    config = parse_config(make_config())
    meta = tmp_path / 'meta.json'
    meta.write_text(json.dumps({'version': config.version, 'config': config.to_dict()}))
    again = parse_config(meta)
    assert again.to_dict() == config.to_dict()


def test_dump_round_trip(tmp_path, make_config):
    config = parse_config(make_config())
    config.dump(tmp_path / 'resolved.yaml')
    assert parse_config(tmp_path / 'resolved.yaml').to_params() == config.to_params()
