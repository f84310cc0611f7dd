import numpy as np
import pytest

from kessel.analysis.functionals import constant_test_combination, phi_eps
from kessel.analysis.weak_residual import (
    REPORT_SCHEMA,
    ResidualReport,
    TestFunction,
    Trajectory,
    build_test_bank,
    check_eps_testing_ineq,
    check_mass_ineq,
    check_supersolution_ineq,
    check_weak_v_identity,
    constant_test_function,
    load_trajectory,
    run_checks,
    tol_id,
    tol_weak,
)
from kessel.config.manager import parse_config
from kessel.core.simulation import run_simulation
from kessel.mesh.geometry import Domain, Field, build_grid, neumann_laplacian_apply
from kessel.solvers.stepper import Params
from kessel.utils.errors import InsufficientSampling


def _params(**overrides):
    values = dict(chi=0.5, eps=0.1, p=0.5, n_eff=2, T=1.0)
    values.update(overrides)
    return Params(**values)


def _homogeneous(grid, c=2.0, T=1.0, samples=21):
    times = np.linspace(0.0, T, samples)
    flat = np.full((samples, grid.n_cells), c)
    return Trajectory(grid, times, flat, flat.copy())


def test_bank_requires_three_members(interval_grid):
    with pytest.raises(ValueError):
        build_test_bank(interval_grid, 1.0, 2)


@pytest.mark.parametrize("count", [3, 6, 9])
def test_nonneg_bank(interval_grid, rectangle_grid, radial_grid, count):
    for grid in (interval_grid, rectangle_grid, radial_grid):
        bank = build_test_bank(grid, 1.0, count)
        assert len(bank) == count
        assert bank[0].amplitude == 0.0
        for phi in bank:
            assert phi.values(grid).min() >= 0
    names = [phi.name for phi in build_test_bank(interval_grid, 1.0, 6)]
    assert names == ['const-cutoff', 'cos1-cutoff', 'const-bump', 'peak-cos2-cutoff', 'cos2-bump', 'cos3-cutoff']


def test_signed_bank_has_sign_changing_members(interval_grid):
    bank = build_test_bank(interval_grid, 1.0, 6, signed=True)
    assert any(phi.values(interval_grid).min() < 0 for phi in bank)


def test_time_parts():
    cutoff = TestFunction('c', time_kind='cutoff', t0=0.5, t1=1.0)
    np.testing.assert_allclose(cutoff.time_value([0.0, 0.25, 0.5]), 1.0)
    assert cutoff.time_value(1.0) == 0.0
    assert 0.0 < cutoff.time_value(0.75) < 1.0
    bump = TestFunction('b', time_kind='bump', t0=0.25, t1=0.125)
    assert bump.time_value(0.25) == pytest.approx(1.0)
    np.testing.assert_array_equal(bump.time_value([0.1, 0.125, 0.375, 0.5]), 0.0)
    assert bump.support() == (0.125, 0.375)
    with pytest.raises(ValueError):
        TestFunction('bad', offset=0.5, amplitude=1.0, mode=1)


def test_rectangle_modes(rectangle_grid):
    psi = TestFunction('m', offset=0.0, amplitude=1.0, mode=2, nonneg=False)
    x, y = rectangle_grid.cell_centers.T
    np.testing.assert_allclose(psi.values(rectangle_grid), np.cos(2 * np.pi * x) * np.cos(np.pi * y / 2.0),
                               atol=1e-14)
    lap = -((2 * np.pi) ** 2 + (np.pi / 2.0) ** 2) * psi.values(rectangle_grid)
    np.testing.assert_allclose(psi.laplacian(rectangle_grid), lap, atol=1e-10)


def test_radial_laplacian_matches_discrete_operator():
    grid = build_grid(Domain.radial_ball(1.0, 3), 200)
    psi = TestFunction('r', offset=0.0, amplitude=1.0, mode=1, nonneg=False)
    discrete = neumann_laplacian_apply(Field(psi.values(grid), grid)).values
    inner = slice(5, -5)
    np.testing.assert_allclose(discrete[inner], psi.laplacian(grid)[inner], atol=5e-3)


def _manufactured_residual(n):
    grid = build_grid(Domain.interval(0.0, np.pi), n)
    x = grid.cell_centers[:, 0]
    times = np.array([0.0, 0.1, 0.2, 0.3, 0.4])
    u = np.tile(2.0 + 2.0 * np.cos(x), (times.size, 1))
    v = np.tile(2.0 + np.cos(x), (times.size, 1))
    psi = TestFunction('cos1', offset=0.0, amplitude=1.0, mode=1, nonneg=False)
    return check_weak_v_identity(Trajectory(grid, times, u, v), psi), grid.h


def test_weak_v_identity_manufactured_order():
    entries = [_manufactured_residual(n) for n in (32, 64, 128)]
    residuals = [entry.residual for entry, _ in entries]
    assert np.log2(residuals[0] / residuals[1]) >= 1.7
    assert np.log2(residuals[1] / residuals[2]) >= 1.7
    for entry, h in entries:
        assert entry.passed
        assert entry.residual == pytest.approx(0.4 * (np.pi / 2) * (1 - np.sin(h / 2) / (h / 2)), rel=1e-6)


def test_insufficient_sampling(interval_grid):
    traj = _homogeneous(interval_grid, samples=2)
    with pytest.raises(InsufficientSampling):
        check_weak_v_identity(traj, constant_test_function())
    bump = TestFunction('b', time_kind='bump', t0=0.5, t1=0.01)
    with pytest.raises(InsufficientSampling):
        check_weak_v_identity(_homogeneous(interval_grid), bump)


def test_homogeneous_state_satisfies_supersolution_exactly(interval_grid):
    traj = _homogeneous(interval_grid)
    params = _params()
    for phi in build_test_bank(interval_grid, 1.0, 6):
        entry = check_supersolution_ineq(traj, phi, params)
        assert entry.passed
        assert abs(entry.residual) < 1e-12


def test_supersolution_needs_vanishing_end(interval_grid):
    traj = _homogeneous(interval_grid)
    with pytest.raises(InsufficientSampling):
        check_supersolution_ineq(traj, constant_test_function(), _params())
    with pytest.raises(ValueError):
        check_supersolution_ineq(traj, TestFunction('s', offset=0.0, amplitude=1.0, mode=1, nonneg=False,
                                                    time_kind='cutoff', t0=0.5, t1=1.0), _params())


def test_homogeneous_testing_slack(interval_grid):
    c, T = 2.0, 1.0
    params = _params()
    entry = check_eps_testing_ineq(_homogeneous(interval_grid, c, T), constant_test_function(), params)
    k = (1 - params.p) * params.chi
    expected = k * np.pi * T * (c ** params.p - phi_eps(c, params.p, params.eps))
    assert entry.residual == pytest.approx(expected, rel=1e-9)
    assert entry.passed


def test_tolerances():
    assert tol_weak(0.1, 0.01, 2.0) == pytest.approx(0.05 * 0.11 * 2.0, rel=1e-9)
    assert tol_id(0.1, 0.5, 2.0) == pytest.approx(0.02, rel=1e-9)


def test_mass_ineq(interval_grid):
    traj = _homogeneous(interval_grid)
    assert check_mass_ineq(traj)
    traj.u[-1] *= 1.01
    assert not check_mass_ineq(traj)


def _run(make_config, **sections):
    config = parse_config(make_config(**sections))
    result = run_simulation(config, write=False, keep_states=True)
    return result, Trajectory.from_states(result.states, result.params)


def test_constant_phi_matches_ledger(make_config):
    result, traj = _run(make_config, domain={'resolution': 64}, time={'output_interval': 1e-3})
    assert traj.times.size == len(result.ledger)
    entry = check_eps_testing_ineq(traj, constant_test_function(), result.params)
    combo = constant_test_combination(result.ledger, result.params.p, result.params.chi)
    assert entry.lhs == pytest.approx(combo['lhs'], rel=1e-8, abs=1e-14)
    assert entry.rhs == pytest.approx(combo['rhs'], rel=1e-8)


def test_report_on_simulated_run(make_config):
    result, traj = _run(make_config)
    report = run_checks(traj, ledger=result.ledger)
    assert report.passed, report.summary_table()
    payload = report.to_dict()
    assert payload['passed']
    assert len(payload['entries']) == 6 + 6 + 7
    assert payload['boundary']['positive']
    assert REPORT_SCHEMA['required'] == ['meta', 'entries', 'mass_ok', 'boundary', 'passed']


def test_empty_report_is_valid():
    assert ResidualReport().to_dict()['passed']


def test_load_trajectory(make_config, out_dir):
    config = parse_config(make_config())
    result = run_simulation(config)
    traj = load_trajectory(result.run_dir)
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(config.time.T)
    assert traj.params == result.params
    np.testing.assert_array_equal(traj.u[-1], result.final.u.values)


def test_reversed_advection_fails_peak_member(make_config):
    scenario = dict(
        domain={'resolution': 64},
        initial_data={'profile': 'gaussian', 'params': {'base': 1.0, 'amplitude': 4.0, 'width': 0.3}},
        model={'chi': 1.8, 'p': 0.5},
        time={'T': 0.5, 'dt_max': 1e-3, 'output_interval': 1e-3},
    )
    physical = _run(make_config, **scenario)[1]
    reversed_run = _run(make_config, **{**scenario, 'model': {'chi': 1.8, 'p': 0.5, 'advection_sign': -1}})[1]
    params = physical.params
    peak = next(phi for phi in build_test_bank(physical.grid, 0.5, 6) if phi.name == 'peak-cos2-cutoff')

    good = check_supersolution_ineq(physical, peak, params)
    bad = check_supersolution_ineq(reversed_run, peak, reversed_run.params)
    assert good.passed
    assert not bad.passed
    assert bad.residual < good.residual
