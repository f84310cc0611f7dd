import numpy as np
import pytest

from kessel.mesh.geometry import Domain, Field, build_grid, integrate
from kessel.solvers.elliptic import assemble, solve_v
from kessel.solvers.initial_data import build_initial_data
from kessel.solvers.stepper import (
    BlowupStatus,
    Params,
    StateSnapshot,
    Stepper,
    advance,
    advection_velocity,
    advective_flux,
    chemotactic_flux,
    detect_blowup,
    diffusive_flux,
    quantize_dt,
    select_p,
    subcritical_regime,
)
from kessel.utils.errors import BlowUpSuspected, ConfigError, PositivityViolation, SupercriticalChi


def _params(**overrides):
    values = dict(chi=0.8, eps=0.1, p=0.5, n_eff=2, T=1.0, dt_max=1e-3)
    values.update(overrides)
    return Params(**values)


def test_select_p():
    assert select_p(0.5, 3) == pytest.approx(0.5)
    assert select_p(2.0, 3) == pytest.approx(0.4)
    assert select_p(0.8, 2) == pytest.approx(2.0 / 3.0)
    assert select_p(5.0, 2) == pytest.approx(2.0 / 15.0)
    for chi, n in ((0.5, 3), (2.0, 3), (2.9, 3), (1.5, 4), (5.0, 2)):
        p = select_p(chi, n)
        assert chi * p < 1.0
        assert n == 2 or 1.0 / p < n / (n - 2)
    with pytest.raises(SupercriticalChi, match="n/\\(n-2\\)"):
        select_p(3.0, 3)
    with pytest.raises(ValueError):
        select_p(-1.0, 2)


def test_subcritical_regime():
    assert subcritical_regime(100.0, 2)
    assert subcritical_regime(2.99, 3)
    assert not subcritical_regime(2.0, 4)


def test_params_validation():
    with pytest.raises(ConfigError):
        _params(eps=1.0)
    with pytest.raises(ConfigError):
        _params(chi=2.5, p=0.5)
    with pytest.raises(ConfigError):
        _params(advection_sign=0)
    with pytest.raises(SupercriticalChi):
        _params(chi=3.0, p=0.2, n_eff=3)
    assert _params(chi=3.0, p=0.2, n_eff=3, enforce_gate=False).chi == 3.0
    assert _params().with_eps(0.01).eps == 0.01


def test_mass_conserved_and_v_identity(interval_grid):
    params = _params()
    stepper = Stepper(interval_grid, params)
    state = stepper.initial_state(build_initial_data(interval_grid, 'cosine', {'amplitude': 0.8}))
    mass0 = integrate(state.u)
    for _ in range(1000):
        state = stepper.advance(state)
        assert state.u.min() >= 0.0
        assert state.v.min() > 0.0
        assert integrate(state.v) == pytest.approx(integrate(state.u), rel=1e-8)
    assert abs(integrate(state.u) - mass0) <= 1e-10 * mass0
    assert state.step_index == 1000


@pytest.mark.parametrize("grid_factory", [
    lambda: build_grid(Domain.rectangle(0.0, 1.0, 0.0, 1.0), 16),
    lambda: build_grid(Domain.radial_ball(1.0, 3), 40),
])
def test_mass_conserved_other_geometries(grid_factory):
    grid = grid_factory()
    params = _params(chi=0.5, n_eff=3 if grid.domain.kind.value == 'radial_ball' else 2)
    stepper = Stepper(grid, params)
    state = stepper.initial_state(build_initial_data(grid, 'gaussian', {'width': 0.2}))
    mass0 = integrate(state.u)
    for _ in range(50):
        state = stepper.advance(state)
    assert abs(integrate(state.u) - mass0) <= 1e-10 * mass0


def test_homogeneous_state_is_steady(rectangle_grid):
    stepper = Stepper(rectangle_grid, _params())
    state = stepper.initial_state(Field(np.full(rectangle_grid.n_cells, 2.5), rectangle_grid))
    for _ in range(20):
        state = stepper.advance(state)
    np.testing.assert_allclose(state.u.values, 2.5, rtol=1e-7)
    np.testing.assert_allclose(state.v.values, 2.5, rtol=1e-7)


def test_chemotactic_flux_limits(interval_grid, random_density):
    grid = interval_grid
    op = assemble(grid)
    flat = Field(np.full(grid.n_cells, 1.7), grid)
    np.testing.assert_allclose(chemotactic_flux(flat, solve_v(op, flat), _params()), 0.0, atol=1e-10)

    u = random_density(grid)
    v = solve_v(op, u)
    np.testing.assert_array_equal(chemotactic_flux(u, v, _params(chi=0.0)), diffusive_flux(u))
    assert chemotactic_flux(u, v, _params()).shape == (grid.face_cells.shape[0],)

    w = advection_velocity(v, 0.8)
    bound = grid.face_areas * np.abs(w) / 1e6
    assert np.all(np.abs(advective_flux(u, v, 0.8, 1e6)) <= bound * (1 + 1e-12))

    with pytest.raises(PositivityViolation):
        chemotactic_flux(u, v.with_values(v.values - v.max()), _params())


def _heat_error(n, T=0.5):
    grid = build_grid(Domain.interval(0.0, np.pi), n)
    x = grid.cell_centers[:, 0]
    params = _params(chi=0.0, T=T, dt_max=0.25 * grid.h ** 2)
    stepper = Stepper(grid, params)
    state = stepper.initial_state(Field(1.0 + 0.5 * np.cos(x), grid))
    while state.t < T:
        state = stepper.advance(state, T)
    exact = 1.0 + 0.5 * np.exp(-T) * np.cos(x)
    return np.sqrt(np.sum(grid.cell_volumes * (state.u.values - exact) ** 2))


def test_heat_mode_decay_second_order():
    errors = [_heat_error(n) for n in (16, 32, 64)]
    assert np.log2(errors[0] / errors[1]) >= 1.7
    assert np.log2(errors[1] / errors[2]) >= 1.7


def test_choose_dt_respects_limits(interval_grid):
    params = _params(dt_max=0.01)
    stepper = Stepper(interval_grid, params)
    state = stepper.initial_state(build_initial_data(interval_grid, 'gaussian'))
    dt = stepper.choose_dt(state)
    assert 0 < dt <= 0.01
    assert dt <= params.cfl_safety * stepper.advective_dt_limit(state)
    assert stepper.choose_dt(state, 1e-4) == pytest.approx(1e-4)
    landed = stepper.advance(state, 1e-4)
    assert landed.t == 1e-4


def test_quantize_dt_ladder():
    assert quantize_dt(np.inf, 1e-3) == 1e-3
    assert quantize_dt(2e-3, 1e-3) == 1e-3
    for limit in (9.9e-4, 3.3e-4, 1.234e-5, 1e-3 * 2.0 ** -1.25):
        dt = quantize_dt(limit, 1e-3)
        assert dt <= limit
        assert dt > limit * 2.0 ** -0.25 * (1 - 1e-12)
        rungs = 4 * np.log2(1e-3 / dt)
        assert rungs == pytest.approx(round(rungs), abs=1e-9)


def test_cfl_limited_steps_reuse_factorizations(interval_grid):
    u0 = build_initial_data(interval_grid, 'gaussian', {'amplitude': 8.0, 'width': 0.2})
    scout = Stepper(interval_grid, _params(dt_max=1.0))
    limit = scout.params.cfl_safety * scout.advective_dt_limit(scout.initial_state(u0))
    params = _params(dt_max=2.0 * limit, T=1e4)
    stepper = Stepper(interval_grid, params)
    state = stepper.initial_state(u0)
    sizes = set()
    for _ in range(200):
        dt = stepper.choose_dt(state)
        assert dt <= params.cfl_safety * stepper.advective_dt_limit(state)
        sizes.add(dt)
        state = stepper.step(state, dt)
    assert len(sizes) <= 8
    assert stepper.factorizations == len(sizes)


def test_nan_state_trips_ceiling(interval_grid):
    stepper = Stepper(interval_grid, _params())
    values = np.ones(interval_grid.n_cells)
    values[5] = np.nan
    state = StateSnapshot(0.0, Field(values, interval_grid), Field(np.ones(interval_grid.n_cells), interval_grid))
    with pytest.raises(BlowUpSuspected) as info:
        stepper.step(state, 1e-4)
    assert np.isnan(info.value.max_u)


def test_flat_density_has_no_cfl_limit(interval_grid):
    stepper = Stepper(interval_grid, _params())
    state = stepper.initial_state(Field(np.ones(interval_grid.n_cells), interval_grid))
    assert stepper.advective_dt_limit(state) == np.inf


def test_undershoot_repair_policies(interval_grid):
    values = np.ones(interval_grid.n_cells)
    mass = float(values @ interval_grid.cell_volumes)

    clamp = Stepper(interval_grid, _params(undershoot_policy="clamp"))
    tiny = values.copy()
    tiny[3] = -1e-14
    repaired = clamp._repair_undershoot(tiny, mass, 0.1)
    assert repaired.min() >= 0
    assert float(repaired @ interval_grid.cell_volumes) == pytest.approx(mass, rel=1e-14)
    assert clamp.clamp_events == 1

    abort = Stepper(interval_grid, _params())
    large = values.copy()
    large[3] = -1e-3
    with pytest.raises(PositivityViolation) as info:
        abort._repair_undershoot(large, mass, 0.1)
    assert info.value.min_value == pytest.approx(-1e-3)
    assert clamp._repair_undershoot(large, mass, 0.1).min() == 0.0


def test_ceiling_raises_blowup(interval_grid):
    stepper = Stepper(interval_grid, _params(ceiling=1.2))
    state = stepper.initial_state(build_initial_data(interval_grid, 'cosine'))
    with pytest.raises(BlowUpSuspected) as info:
        stepper.advance(state)
    assert info.value.max_u > 1.2
    assert info.value.snapshot is not None


def test_negative_state_rejected(interval_grid):
    u = Field(np.full(interval_grid.n_cells, -1.0), interval_grid)
    v = Field(np.ones(interval_grid.n_cells), interval_grid)
    with pytest.raises(PositivityViolation):
        advance(StateSnapshot(0.0, u, v), _params())


def test_module_level_advance(interval_grid):
    params = _params()
    state = Stepper(interval_grid, params).initial_state(build_initial_data(interval_grid, 'cosine'))
    nxt = advance(state, params)
    assert nxt.t > 0 and nxt.step_index == 1


def test_detect_blowup():
    t = np.linspace(0.0, 1.0, 20)
    assert detect_blowup(np.ones(20), t) is BlowupStatus.STABLE
    assert detect_blowup(np.exp(10.0 * t), t) is BlowupStatus.GROWING
    assert detect_blowup(np.r_[np.ones(19), 1e9], t) is BlowupStatus.CEILING
    with pytest.raises(ValueError):
        detect_blowup([1.0], [0.0])
