import json

import pytest
import yaml

from kessel.cli import build_parser, main, overrides_from_args
from kessel.utils.artifacts import read_json


def _write(tmp_path, data, name='run.yaml'):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_flags_map_to_config_keys():
    args = build_parser().parse_args(['--eps', '0.01', '--allow-supercritical', '--workers', '3'])
    overrides = overrides_from_args(args)
    assert overrides['model.eps'] == 0.01
    assert overrides['sweep.workers'] == 3
    assert overrides['run.allow_supercritical'] is True
    assert overrides['model.chi'] is None


def test_config_errors_exit_2(tmp_path, out_dir, make_config):
    assert main(['--config', str(tmp_path / 'missing.yaml')]) == 2
    assert main(['--config', _write(tmp_path, make_config(model={'unknown': 1}))]) == 2
    supercritical = make_config(domain={'kind': 'radial_ball', 'bounds': [1.0], 'resolution': 16, 'n_eff': 3},
                                initial_data={'profile': 'gaussian', 'params': {}}, model={'chi': 3.0})
    assert main(['--config', _write(tmp_path, supercritical)]) == 2


def test_compare_ode(out_dir, capsys):
    assert main(['--mode', 'compare-ode']) == 0
    assert 'verdict: pass' in capsys.readouterr().out


def test_simulate_then_check(tmp_path, out_dir, make_config):
    data = make_config(initial_data={'profile': 'constant', 'params': {'value': 1.5}},
                       output={'scenario': 'flat'})
    assert main(['--config', _write(tmp_path, data)]) == 0
    run_dir = out_dir / 'flat' / '0.1'
    for name in ('ledger.csv', 'snaps.bin', 'meta.json'):
        assert (run_dir / name).exists()
    meta = read_json(run_dir / 'meta.json')
    assert meta['status'] == 'completed'
    assert meta['summary']['mass_drift'] <= 1e-10

    assert main(['--mode', 'check', '--run-dir', str(run_dir)]) == 0
    report = json.loads((run_dir / 'residual_report.json').read_text())
    assert report['passed']


def test_rerun_from_meta_is_identical(tmp_path, out_dir, make_config):
    assert main(['--config', _write(tmp_path, make_config(output={'scenario': 'repro'}))]) == 0
    run_dir = out_dir / 'repro' / '0.1'
    first = (run_dir / 'ledger.csv').read_bytes()
    snaps = (run_dir / 'snaps.bin').read_bytes()
    assert main(['--config', str(run_dir / 'meta.json')]) == 0
    assert (run_dir / 'ledger.csv').read_bytes() == first
    assert (run_dir / 'snaps.bin').read_bytes() == snaps


@pytest.mark.parametrize("profile,code", [('ci', 4), ('exploratory', 0)])
def test_ceiling_exit_codes(tmp_path, out_dir, make_config, profile, code):
    data = make_config(sweep={'ceiling': 1.2}, output={'scenario': f'ceiling-{profile}'})
    assert main(['--config', _write(tmp_path, data), '--profile', profile]) == code
    meta = read_json(out_dir / f'ceiling-{profile}' / '0.1' / 'meta.json')
    assert meta['status'] == 'blowup'


def test_supercritical_ci_ceiling_is_flagged(tmp_path, out_dir, make_config, capsys):
    data = make_config(domain={'kind': 'radial_ball', 'bounds': [1.0], 'resolution': 16, 'n_eff': 3},
                       initial_data={'profile': 'gaussian', 'params': {}}, model={'chi': 3.0},
                       sweep={'ceiling': 1.2}, output={'scenario': 'flagged'})
    argv = ['--config', _write(tmp_path, data), '--profile', 'ci', '--allow-supercritical']
    assert main(argv) == 0
    assert 'blowup: flagged' in capsys.readouterr().out
    assert read_json(out_dir / 'flagged' / '0.1' / 'meta.json')['status'] == 'blowup'
