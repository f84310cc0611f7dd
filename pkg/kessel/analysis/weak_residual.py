"""
Weak-form residual checks
Evaluates the supersolution inequality, the weak elliptic identity, the mass
inequality and the ε-level testing inequality on stored trajectories against
a bank of analytic test functions.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import jsonschema
import numpy as np
import pandas as pd

from kessel.analysis.functionals import U_FLOOR, DensityTerms, phi_eps_array
from kessel.mesh.geometry import Domain, DomainKind, Grid, build_grid, grad_dot_integral
from kessel.solvers.stepper import Params, StateSnapshot
from kessel.utils.artifacts import META_FILE, SNAPSHOT_FILE, read_json, read_snapshots, write_json
from kessel.utils.errors import InsufficientSampling, PositivityViolation
from kessel.utils.logger import get_logger

logger = get_logger(__name__)

C_WEAK = 0.05
C_ID = 1.0
MIN_SAMPLES_IN_SUPPORT = 3
ROUNDOFF_FLOOR = 1e-12
TIME_KINDS = ("constant", "cutoff", "bump")


def tol_weak(h: float, dt: float, scale: float, constant: float = C_WEAK) -> float:
    """C_weak·(h + dt)·scale, plus an absolute round-off floor"""
    return constant * (h + dt) * scale + ROUNDOFF_FLOOR


def tol_id(h: float, dt: float, scale: float, constant: float = C_ID) -> float:
    """
    C_id·h²·scale, plus an absolute round-off floor.

    The identity holds sample by sample, so the time step does not enter.
    """
    return constant * h ** 2 * scale + ROUNDOFF_FLOOR


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C∞ transition from 1 at x <= 0 to 0 at x >= 1"""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide='ignore', over='ignore'):
        rise = np.where(x < 1.0, np.exp(-1.0 / np.where(x < 1.0, 1.0 - x, 1.0)), 0.0)
        fall = np.where(x > 0.0, np.exp(-1.0 / np.where(x > 0.0, x, 1.0)), 0.0)
    return rise / (rise + fall)


def _cos_axis(coord: np.ndarray, start: float, length: float, k: int) -> Tuple[np.ndarray, ...]:
    """cos(kπ(x-a)/L) with its first and second derivatives"""
    w = k * np.pi / length
    arg = w * (coord - start)
    return np.cos(arg), -w * np.sin(arg), -w * w * np.cos(arg)


@dataclass(frozen=True)
class TestFunction:
    """
    φ(x, t) = (offset + amplitude·C_k(x))·η(t).

    C_k is a Neumann cosine mode: cos(kπ(x-a)/L) on intervals, the product
    cos(kπ(x-ax)/Lx)·cos((k-1)π(y-ay)/Ly) on rectangles and cos(kπr/R) on
    radial balls. Mode 0 is the constant 1. The time part η is 1, a smooth
    cutoff from 1 at t0 down to 0 at t1, or the bump exp(1 - 1/(1-z²)) with
    z = (t - t0)/t1.
    """
    __test__ = False

    name: str
    offset: float = 1.0
    amplitude: float = 0.0
    mode: int = 0
    time_kind: str = "constant"
    t0: float = 0.0
    t1: float = 0.0
    nonneg: bool = True

    def __post_init__(self):
        if self.time_kind not in TIME_KINDS:
            raise ValueError(f"Unknown time part {self.time_kind!r}")
        if self.time_kind == "cutoff" and not self.t1 > self.t0 >= 0:
            raise ValueError(f"cutoff needs 0 <= t0 < t1, got ({self.t0}, {self.t1})")
        if self.time_kind == "bump" and not self.t1 > 0:
            raise ValueError(f"bump needs a positive half-width, got {self.t1}")
        if self.nonneg and self.offset < abs(self.amplitude):
            raise ValueError(f"{self.name}: offset {self.offset} cannot keep the test function nonnegative")

    # time part

    def time_value(self, t: Union[float, np.ndarray]) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.time_kind == "constant":
            return np.ones_like(t)
        if self.time_kind == "cutoff":
            return _smooth_step((t - self.t0) / (self.t1 - self.t0))
        z = (t - self.t0) / self.t1
        inside = np.abs(z) < 1.0
        safe = np.where(inside, 1.0 - z * z, 1.0)
        return np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)

    def support(self) -> Tuple[float, float]:
        if self.time_kind == "constant":
            return 0.0, np.inf
        if self.time_kind == "cutoff":
            return 0.0, self.t1
        return self.t0 - self.t1, self.t0 + self.t1

    # spatial part

    def _modes(self, grid: Grid) -> Tuple[int, int]:
        if grid.domain.kind is DomainKind.RECTANGLE:
            return self.mode, max(self.mode - 1, 0)
        return self.mode, 0

    def _shape(self, points: np.ndarray, grid: Grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """C, ∂C/∂x, ∂C/∂y (zero off rectangles) and ΔC at the given points"""
        domain = grid.domain
        kx, ky = self._modes(grid)
        if domain.kind is DomainKind.RECTANGLE:
            ax, bx, ay, by = domain.bounds
            cx, dcx, d2cx = _cos_axis(points[:, 0], ax, bx - ax, kx)
            cy, dcy, d2cy = _cos_axis(points[:, 1], ay, by - ay, ky)
            return cx * cy, dcx * cy, cx * dcy, d2cx * cy + cx * d2cy
        if domain.kind is DomainKind.INTERVAL:
            a, b = domain.bounds
            c, dc, d2c = _cos_axis(points[:, 0], a, b - a, kx)
            return c, dc, np.zeros_like(c), d2c
        r = points[:, 0]
        c, dc, d2c = _cos_axis(r, 0.0, domain.bounds[0], kx)
        return c, dc, np.zeros_like(c), d2c + (domain.n - 1) * dc / r

    def values(self, grid: Grid) -> np.ndarray:
        """Spatial part at cell centers"""
        c = self._shape(grid.cell_centers, grid)[0]
        return self.offset + self.amplitude * c

    def face_values(self, grid: Grid) -> np.ndarray:
        """Spatial part at interior face centers"""
        c = self._shape(grid.face_centers, grid)[0]
        return self.offset + self.amplitude * c

    def normal_derivative(self, grid: Grid) -> np.ndarray:
        """Spatial derivative along each face's axis, left → right"""
        _, dx, dy, _ = self._shape(grid.face_centers, grid)
        return self.amplitude * np.where(grid.face_axes == 0, dx, dy)

    def laplacian(self, grid: Grid) -> np.ndarray:
        """Analytic Δ of the spatial part at cell centers"""
        return self.amplitude * self._shape(grid.cell_centers, grid)[3]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def constant_test_function(name: str = "one") -> TestFunction:
    """φ ≡ 1"""
    return TestFunction(name)


def _nonneg_templates(T: float) -> List[Dict[str, Any]]:
    cutoff = {'time_kind': 'cutoff', 't0': 0.5 * T, 't1': T}
    bump = {'time_kind': 'bump', 't0': 0.25 * T, 't1': 0.125 * T}
    return [
        {'name': 'const-cutoff', 'offset': 1.0, **cutoff},
        {'name': 'cos1-cutoff', 'offset': 1.5, 'amplitude': 1.0, 'mode': 1, **cutoff},
        {'name': 'const-bump', 'offset': 1.0, **bump},
        {'name': 'peak-cos2-cutoff', 'offset': 1.0, 'amplitude': -1.0, 'mode': 2, **cutoff},
        {'name': 'cos2-bump', 'offset': 1.5, 'amplitude': 1.0, 'mode': 2, **bump},
        {'name': 'cos3-cutoff', 'offset': 1.5, 'amplitude': 1.0, 'mode': 3, **cutoff},
    ]


def _signed_templates(T: float) -> List[Dict[str, Any]]:
    cutoff = {'time_kind': 'cutoff', 't0': 0.5 * T, 't1': T}
    bump = {'time_kind': 'bump', 't0': 0.25 * T, 't1': 0.125 * T}
    return [
        {'name': 'const-cutoff', 'offset': 1.0, **cutoff},
        {'name': 'pure-cos1-cutoff', 'offset': 0.0, 'amplitude': 1.0, 'mode': 1, 'nonneg': False, **cutoff},
        {'name': 'pure-cos2-bump', 'offset': 0.0, 'amplitude': 1.0, 'mode': 2, 'nonneg': False, **bump},
        {'name': 'cos1-bump', 'offset': 1.5, 'amplitude': 1.0, 'mode': 1, **bump},
        {'name': 'pure-cos3-cutoff', 'offset': 0.0, 'amplitude': 1.0, 'mode': 3, 'nonneg': False, **cutoff},
        {'name': 'peak-cos2-cutoff', 'offset': 1.0, 'amplitude': -1.0, 'mode': 2, **cutoff},
    ]


def build_test_bank(grid: Grid, T: float, count: int, signed: bool = False) -> List[TestFunction]:
    """
    Build `count` analytic test functions on [0, T).

    The nonnegative bank always starts with a spatially constant member, a
    low-mode cosine with positive offset, a short time bump and a member
    peaked where the cosine modes meet. The signed bank mixes in pure cosine
    modes. Past the templates, higher cosine modes are appended.
    """
    if count < 3:
        raise ValueError(f"Test bank needs at least 3 members, got {count}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    templates = _signed_templates(T) if signed else _nonneg_templates(T)
    bank = []
    for index in range(count):
        if index < len(templates):
            spec = templates[index]
        else:
            mode = 4 + index - len(templates)
            time = ({'time_kind': 'cutoff', 't0': 0.5 * T, 't1': T} if index % 2 == 0
                    else {'time_kind': 'bump', 't0': 0.25 * T, 't1': 0.125 * T})
            spec = {'name': f"cos{mode}-{time['time_kind']}", 'offset': 1.5, 'amplitude': 1.0,
                    'mode': mode, **time}
        phi = TestFunction(**spec)
        if phi.nonneg and phi.values(grid).min() < 0:
            raise ValueError(f"{phi.name} is negative on the grid")
        bank.append(phi)
    return bank


@dataclass
class Trajectory:
    """Stored samples (t_k, u_k, v_k) on one grid"""
    grid: Grid
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    params: Optional[Params] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
        if self.u.shape != self.v.shape or self.u.shape != (self.times.size, self.grid.n_cells):
            raise ValueError("Trajectory arrays do not match the grid and sample times")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("Trajectory times must be strictly increasing")

    @classmethod
    def from_states(cls, states: Sequence[StateSnapshot], params: Optional[Params] = None) -> 'Trajectory':
        grid = states[0].u.grid
        return cls(grid, [s.t for s in states], [s.u.values for s in states],
                   [s.v.values for s in states], params)

    @property
    def weights(self) -> np.ndarray:
        """Left-endpoint time weights; the last sample carries none"""
        return np.append(np.diff(self.times), 0.0)

    @property
    def dt(self) -> float:
        return float(np.diff(self.times).max()) if self.times.size > 1 else 0.0

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def masses(self) -> np.ndarray:
        return self.u @ self.grid.cell_volumes

    def terms(self, k: int, params: Params) -> DensityTerms:
        return DensityTerms(self.u[k], self.v[k], self.grid, params.p, params.eps)


def load_trajectory(run_dir: Union[str, Path]) -> Trajectory:
    """Rebuild grid, parameters and samples from a run directory"""
    run_dir = Path(run_dir)
    meta = read_json(run_dir / META_FILE)
    grid = build_grid(Domain.from_dict(meta['grid']['domain']), meta['grid']['shape'])
    params = Params(**meta['params'])
    records = read_snapshots(run_dir / SNAPSHOT_FILE, grid_hash=grid.descriptor_hash)
    if not records:
        raise InsufficientSampling(f"No snapshots stored in {run_dir}")
    times, u, v = zip(*records)
    logger.info(f"Loaded {len(times)} snapshots from {run_dir}")
    return Trajectory(grid, np.array(times), np.array(u), np.array(v), params)


def _require_sampling(traj: Trajectory, phi: TestFunction, vanish_at_end: bool):
    eta = phi.time_value(traj.times)
    inside = np.count_nonzero(eta > 0)
    if inside < MIN_SAMPLES_IN_SUPPORT:
        raise InsufficientSampling(
            f"{phi.name}: only {inside} snapshots inside its time support {phi.support()}"
        )
    if vanish_at_end and eta[-1] > 0:
        raise InsufficientSampling(
            f"{phi.name}: snapshots end at t={traj.times[-1]:.6g} before the test function vanishes"
        )


def _require_positive_v(traj: Trajectory, phi: TestFunction):
    eta = phi.time_value(traj.times)
    for k in np.flatnonzero(eta > 0):
        low = traj.v[k].min()
        if low <= U_FLOOR:
            raise PositivityViolation(f"v={low:.3e} below the positivity floor at t={traj.times[k]:.6g}",
                                      min_value=float(low), t=float(traj.times[k]))


@dataclass
class ResidualEntry:
    """One (check, test function) evaluation"""
    check: str
    test_function: str
    lhs: float
    rhs: float
    residual: float
    tol: float
    h: float
    dt: float
    passed: bool
    terms: Dict[str, float] = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.residual / self.tol if self.tol > 0 else float('inf')

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['ratio'] = self.ratio
        return data


def _time_derivative_lhs(traj: Trajectory, phi: TestFunction, params: Params,
                         include_final: bool) -> float:
    """-Σ_k ∫u_k^p (φ_{k+1} - φ_k) [+ ∫u_N^p φ_N] - ∫u_0^p φ_0"""
    spatial = phi.values(traj.grid)
    eta = phi.time_value(traj.times)
    up = (np.maximum(traj.u, 0.0) ** params.p * spatial) @ traj.grid.cell_volumes
    lhs = -float(np.sum(up[:-1] * np.diff(eta))) - eta[0] * up[0]
    if include_final:
        lhs += eta[-1] * up[-1]
    return float(lhs)


def _weighted_terms(traj: Trajectory, phi: TestFunction, params: Params) -> Dict[str, float]:
    """Space-time integrals shared by both testing inequalities, before coefficients"""
    grid = traj.grid
    face = phi.face_values(grid)
    cell = phi.values(grid)
    normal = phi.normal_derivative(grid)
    lap = phi.laplacian(grid)
    eta = phi.time_value(traj.times)
    weights = traj.weights * eta

    totals = dict.fromkeys(['A1', 'up_lap', 'A2', 'phi', 'up', 'A3', 'phi_drift', 'g_drift', 'up_drift'], 0.0)
    for k in np.flatnonzero(weights != 0):
        terms = traj.terms(k, params)
        u = terms.u
        sample = {
            'A1': terms.grad_w_sq(face),
            'up_lap': terms.up(lap),
            'A2': terms.mixed_sq(face),
            'phi': terms.phi(cell),
            'up': terms.up(cell),
            'A3': terms.up_over_v(cell),
            'phi_drift': terms.drift_pairing(phi_eps_array(u, params.p, params.eps), normal),
            'g_drift': terms.drift_pairing(terms.up_cells / (1.0 + params.eps * u), normal),
            'up_drift': terms.drift_pairing(terms.up_cells, normal),
        }
        for name, value in sample.items():
            totals[name] += weights[k] * value
    return totals


def _inequality_entry(check: str, traj: Trajectory, phi: TestFunction, lhs: float,
                      terms: Dict[str, float], weak_constant: float) -> ResidualEntry:
    rhs = float(sum(terms.values()))
    scale = abs(lhs) + sum(abs(value) for value in terms.values())
    tol = tol_weak(traj.h, traj.dt, scale, weak_constant)
    residual = lhs - rhs
    passed = residual >= -tol
    if not passed:
        logger.warning(f"{check} fails for {phi.name}: residual={residual:.4e}, tol={tol:.4e}")
    return ResidualEntry(check, phi.name, lhs, rhs, residual, tol, traj.h, traj.dt, bool(passed), terms)


def check_weak_v_identity(traj: Trajectory, psi: TestFunction, id_constant: float = C_ID) -> ResidualEntry:
    """
    Residual of ∫∫∇v·∇ψ + ∫∫vψ = ∫∫uψ.

    Raises:
        InsufficientSampling: fewer than three snapshots inside supp ψ
    """
    _require_sampling(traj, psi, vanish_at_end=False)
    grid = traj.grid
    cell = psi.values(grid)
    normal = psi.normal_derivative(grid)
    weights = traj.weights * psi.time_value(traj.times)

    grad = v_term = u_term = 0.0
    for k in np.flatnonzero(weights != 0):
        grad += weights[k] * grad_dot_integral(traj.v[k], grid, normal)
        v_term += weights[k] * float(np.sum(grid.cell_volumes * traj.v[k] * cell))
        u_term += weights[k] * float(np.sum(grid.cell_volumes * traj.u[k] * cell))

    lhs = grad + v_term
    residual = abs(lhs - u_term)
    tol = tol_id(traj.h, traj.dt, abs(grad) + abs(v_term) + abs(u_term), id_constant)
    passed = residual <= tol
    if not passed:
        logger.warning(f"v identity fails for {psi.name}: residual={residual:.4e}, tol={tol:.4e}")
    return ResidualEntry('v_identity', psi.name, lhs, u_term, residual, tol, traj.h, traj.dt, bool(passed),
                         {'grad': grad, 'v': v_term, 'u': u_term})


def check_supersolution_ineq(traj: Trajectory, phi: TestFunction, params: Params,
                             weak_constant: float = C_WEAK) -> ResidualEntry:
    """
    Signed residual of

        -∫∫u^p φ_t - ∫u₀^p φ(·,0) >= c1∫∫|∇u^(p/2)|²φ + ∫∫u^p Δφ + c2∫∫|∇u^(p/2) - u^(p/2)∇v/(2v)|²φ
                                     - (1-p)χ∫∫u^p φ + (1-p)χ∫∫u^(p+1)/v φ - (1-2p)χ∫∫u^p ∇v/v·∇φ

    with c1 = 4(1-p)(1-pχ)/p and c2 = 4(1-p)χ; passes iff lhs - rhs >= -tol_weak.

    Raises:
        ValueError: φ is not a nonnegative test function
        InsufficientSampling: snapshots do not cover supp φ
        PositivityViolation: v at or below the floor inside supp φ
    """
    if not phi.nonneg:
        raise ValueError(f"{phi.name} is not nonnegative")
    _require_sampling(traj, phi, vanish_at_end=True)
    if traj.times[0] != 0.0:
        raise InsufficientSampling("Trajectory must start at t=0 to test against the initial data")
    _require_positive_v(traj, phi)

    p, chi = params.p, params.chi
    raw = _weighted_terms(traj, phi, params)
    terms = {
        'grad_up2': 4 * (1 - p) * (1 - p * chi) / p * raw['A1'],
        'up_lap': raw['up_lap'],
        'mixed': 4 * (1 - p) * chi * raw['A2'],
        'up': -(1 - p) * chi * raw['up'],
        'up1_over_v': (1 - p) * chi * raw['A3'],
        'up_drift': -(1 - 2 * p) * chi * raw['up_drift'],
    }
    lhs = _time_derivative_lhs(traj, phi, params, include_final=False)
    return _inequality_entry('supersolution', traj, phi, lhs, terms, weak_constant)


def check_eps_testing_ineq(traj: Trajectory, phi: TestFunction, params: Params,
                           weak_constant: float = C_WEAK) -> ResidualEntry:
    """
    Signed residual of the ε-level testing inequality over [t_0, t_N],
    including the ∫u^p(·,t_N)φ(·,t_N) boundary term and the Φ_ε terms.
    """
    _require_sampling(traj, phi, vanish_at_end=False)
    _require_positive_v(traj, phi)

    p, chi = params.p, params.chi
    k = (1 - p) * chi
    raw = _weighted_terms(traj, phi, params)
    terms = {
        'grad_up2': 4 * (1 - p) * (1 - p * chi) / p * raw['A1'],
        'up_lap': raw['up_lap'],
        'mixed': 4 * (1 - p) * chi * raw['A2'],
        'phi_eps': k * raw['phi'],
        'up': -2 * k * raw['up'],
        'up1_over_v': k * raw['A3'],
        'phi_drift': k * raw['phi_drift'],
        'g_drift': p * chi * raw['g_drift'],
        'up_drift': -2 * k * raw['up_drift'],
    }
    lhs = _time_derivative_lhs(traj, phi, params, include_final=True)
    return _inequality_entry('eps_testing', traj, phi, lhs, terms, weak_constant)


def check_mass_ineq(traj: Union[Trajectory, pd.DataFrame], rel_tol: float = 1e-10) -> bool:
    """True iff ∫u(t) <= ∫u₀·(1 + rel_tol) at every recorded time"""
    if isinstance(traj, pd.DataFrame):
        masses = traj['mass_u'].to_numpy()
    else:
        masses = traj.masses
    return bool(np.all(masses <= masses[0] * (1.0 + rel_tol)))


def boundary_trace_report(traj: Trajectory, params: Params, floor: float = U_FLOOR) -> Dict[str, Any]:
    """Minimum of u^(p/2) over boundary cells and the boundary quadrature of ln u"""
    grid = traj.grid
    cells = grid.boundary_cells
    boundary_u = np.maximum(traj.u[:, cells], 0.0)
    log_trace = np.log(np.maximum(boundary_u, floor)) @ grid.boundary_areas
    min_trace = float(boundary_u.min() ** (params.p / 2))
    return {
        'min_trace_up2': min_trace,
        'log_trace_integral': float(np.sum(traj.weights * log_trace)),
        'floored': int(np.count_nonzero(boundary_u < floor)),
        'positive': bool(min_trace > 0),
    }


REPORT_SCHEMA = {
    'type': 'object',
    'required': ['meta', 'entries', 'mass_ok', 'boundary', 'passed'],
    'additionalProperties': False,
    'properties': {
        'meta': {'type': 'object'},
        'mass_ok': {'type': 'boolean'},
        'passed': {'type': 'boolean'},
        'boundary': {
            'type': 'object',
            'required': ['min_trace_up2', 'log_trace_integral', 'floored', 'positive'],
        },
        'entries': {
            'type': 'array',
            'items': {
                'type': 'object',
                'required': ['check', 'test_function', 'lhs', 'rhs', 'residual', 'tol',
                             'h', 'dt', 'passed', 'ratio', 'terms'],
                'additionalProperties': False,
                'properties': {
                    'check': {'enum': ['v_identity', 'supersolution', 'eps_testing']},
                    'test_function': {'type': 'string'},
                    'lhs': {'type': 'number'},
                    'rhs': {'type': 'number'},
                    'residual': {'type': 'number'},
                    'tol': {'type': 'number', 'minimum': 0},
                    'ratio': {'type': 'number'},
                    'h': {'type': 'number', 'exclusiveMinimum': 0},
                    'dt': {'type': 'number', 'minimum': 0},
                    'passed': {'type': 'boolean'},
                    'terms': {'type': 'object', 'additionalProperties': {'type': 'number'}},
                },
            },
        },
    },
}


@dataclass
class ResidualReport:
    """All residual entries of one trajectory"""
    entries: List[ResidualEntry] = field(default_factory=list)
    mass_ok: bool = True
    boundary: Dict[str, Any] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.mass_ok and all(entry.passed for entry in self.entries)

    def failures(self, check: Optional[str] = None) -> List[ResidualEntry]:
        return [e for e in self.entries if not e.passed and (check is None or e.check == check)]

    def to_dict(self) -> Dict[str, Any]:
        payload = {
            'meta': self.meta,
            'entries': [entry.to_dict() for entry in self.entries],
            'mass_ok': self.mass_ok,
            'boundary': self.boundary,
            'passed': self.passed,
        }
        jsonschema.validate(payload, REPORT_SCHEMA)
        return payload

    def to_json(self, path: Optional[Union[str, Path]] = None) -> str:
        payload = self.to_dict()
        if path is not None:
            write_json(path, payload)
        return json.dumps(payload, indent=2)

    def summary_table(self) -> str:
        frame = pd.DataFrame([
            {'check': e.check, 'test_function': e.test_function, 'residual': e.residual,
             'tol': e.tol, 'ratio': e.ratio, 'passed': e.passed}
            for e in self.entries
        ])
        if frame.empty:
            return "no residual entries"
        return frame.to_string(index=False, float_format=lambda x: f"{x:.4e}")


def run_checks(traj: Trajectory, params: Optional[Params] = None, bank_size: int = 6,
               weak_constant: float = C_WEAK, id_constant: float = C_ID,
               ledger: Optional[pd.DataFrame] = None) -> ResidualReport:
    """
    Run the full residual suite on one trajectory.

    The trajectory's final sample time plays the role of T for the banks.
    """
    params = params or traj.params
    if params is None:
        raise ValueError("run_checks needs the run parameters")
    T = float(traj.times[-1])
    report = ResidualReport(meta={
        'chi': params.chi, 'eps': params.eps, 'p': params.p, 'n_eff': params.n_eff,
        'T': T, 'h': traj.h, 'dt': traj.dt, 'samples': int(traj.times.size),
        'weak_constant': weak_constant, 'id_constant': id_constant,
    })

    for psi in build_test_bank(traj.grid, T, bank_size, signed=True):
        report.entries.append(check_weak_v_identity(traj, psi, id_constant))
    for phi in build_test_bank(traj.grid, T, bank_size):
        report.entries.append(check_supersolution_ineq(traj, phi, params, weak_constant))
    for phi in [constant_test_function()] + build_test_bank(traj.grid, T, bank_size):
        report.entries.append(check_eps_testing_ineq(traj, phi, params, weak_constant))

    report.mass_ok = check_mass_ineq(ledger if ledger is not None else traj)
    report.boundary = boundary_trace_report(traj, params)
    logger.info(f"Residual checks: {len(report.entries)} entries, "
                f"{len(report.failures())} failures, mass_ok={report.mass_ok}")
    return report
