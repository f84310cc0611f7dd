import numpy as np
import pytest

from kessel.mesh.geometry import Domain, Field, build_grid, gradient_sq_over_sq, integrate
from kessel.solvers.elliptic import SpdSolver, assemble, inverse_v_identity_gap, select_q, solve_v, v_lq_integral
from kessel.utils.errors import SolverDivergence


def _manufactured_error(n):
    grid = build_grid(Domain.interval(0.0, np.pi), n)
    x = grid.cell_centers[:, 0]
    v = solve_v(assemble(grid), Field(2.0 + 2.0 * np.cos(x), grid))
    return np.abs(v.values - (2.0 + np.cos(x))).max()


def test_manufactured_pair_converges_second_order():
    errors = [_manufactured_error(n) for n in (32, 64, 128, 256)]
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(rates >= 1.7), rates


def test_constant_source_gives_constant_v(interval_grid, rectangle_grid, radial_grid):
    for grid in (interval_grid, rectangle_grid, radial_grid):
        v = solve_v(assemble(grid), Field(np.full(grid.n_cells, 1.7), grid))
        np.testing.assert_allclose(v.values, 1.7, rtol=1e-9)


def test_mass_identity_and_positivity(interval_grid, rectangle_grid, radial_grid, random_density):
    for grid in (interval_grid, rectangle_grid, radial_grid):
        u = random_density(grid)
        v = solve_v(assemble(grid), u)
        assert integrate(v) == pytest.approx(integrate(u), rel=1e-8)
        assert v.min() > 0


def test_identity_gap_vanishes(interval_grid, rectangle_grid, radial_grid, random_density):
    for grid in (interval_grid, rectangle_grid, radial_grid):
        u = random_density(grid)
        v = solve_v(assemble(grid, tol=1e-12), u)
        assert abs(inverse_v_identity_gap(u, v)) < 1e-7 * grid.measure
        assert gradient_sq_over_sq(v, floor=v.min()) <= grid.measure


def test_tolerance_range_checked(interval_grid):
    op = assemble(interval_grid)
    u = Field(np.ones(interval_grid.n_cells), interval_grid)
    with pytest.raises(ValueError):
        solve_v(op, u, tol=1e-3)
    with pytest.raises(ValueError):
        solve_v(op, u, tol=1e-16)


def test_grid_mismatch_rejected(interval_grid):
    other = build_grid(Domain.interval(0.0, np.pi), 32)
    with pytest.raises(ValueError):
        solve_v(assemble(interval_grid), Field(np.ones(32), other))


def test_cg_iteration_budget_reported(rectangle_grid, random_density):
    op = assemble(rectangle_grid)
    solver = SpdSolver(op.spd, rectangle_grid, tol=1e-12, maxiter=1)
    u = random_density(rectangle_grid)
    with pytest.raises(SolverDivergence) as info:
        solver.solve(rectangle_grid.cell_volumes * u.values)
    assert info.value.report()['iterations'] <= 1


def test_select_q():
    assert select_q(2) == 2.0
    assert select_q(3) == 2.0
    assert select_q(4) == 1.5
    with pytest.raises(ValueError):
        select_q(1)


def test_v_lq_bounded_under_concentration():
    grid = build_grid(Domain.radial_ball(1.0, 3), 200)
    op = assemble(grid)
    r = grid.cell_centers[:, 0]
    q = select_q(3)
    values = []
    for width in (0.2, 0.1, 0.05, 0.025):
        u = Field(np.exp(-r ** 2 / (2.0 * width ** 2)), grid)
        u = u.with_values(u.values / integrate(u))
        v = solve_v(op, u)
        assert integrate(v) == pytest.approx(1.0, rel=1e-8)
        values.append(v_lq_integral(v, q))
    assert all(np.isfinite(values))
    assert max(values) <= 2.0 * min(values)
