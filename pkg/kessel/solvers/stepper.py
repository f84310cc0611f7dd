"""
IMEX time stepper
Explicit upwind chemotactic transport followed by implicit diffusion for
u_t = ∇·(∇u - χ u/((1+εu)v) ∇v), with v re-solved after every step.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import sparse

from kessel.mesh.geometry import Field, Grid, face_average, integrate
from kessel.solvers.elliptic import DEFAULT_TOL, EllipticOperator, SpdSolver, assemble, solve_v
from kessel.utils.errors import BlowUpSuspected, ConfigError, PositivityViolation, SupercriticalChi
from kessel.utils.logger import get_logger

logger = get_logger(__name__)

UNDERSHOOT_POLICIES = ("abort", "clamp")
V_FACE_MODES = ("arithmetic", "harmonic")
FACTOR_CACHE_SIZE = 8
SNAP_FRACTION = 1e-9
DT_LEVELS_PER_OCTAVE = 4


def subcritical_regime(chi: float, n_eff: int) -> bool:
    """True when 0 <= chi < n/(n-2); every chi qualifies in the plane"""
    if n_eff < 2:
        raise ValueError(f"n_eff must be >= 2, got {n_eff}")
    if n_eff == 2:
        return chi >= 0
    return 0 <= chi < n_eff / (n_eff - 2)


def select_p(chi: float, n_eff: int) -> float:
    """
    Pick p in (0, 1) with chi < 1/p < n/(n-2).

    1/p is the midpoint of (max(chi, 1), n/(n-2)). In the plane the upper end
    is open, so the interval is truncated to (max(chi, 1), 2 max(chi, 1)),
    giving p = 2/(3 max(chi, 1)).

    Raises:
        SupercriticalChi: chi >= n/(n-2) for n_eff >= 3
    """
    if chi < 0:
        raise ValueError(f"chi must be nonnegative, got {chi}")
    if not subcritical_regime(chi, n_eff):
        raise SupercriticalChi(
            f"supercritical chi: chi={chi} violates chi < n/(n-2) = {n_eff / (n_eff - 2):g} for n_eff={n_eff}"
        )
    low = max(chi, 1.0)
    if n_eff == 2:
        return 2.0 / (3.0 * low)
    high = n_eff / (n_eff - 2)
    return 1.0 / (0.5 * (low + high))


@dataclass(frozen=True)
class Params:
    """Model and time-integration parameters of one run"""
    chi: float
    eps: float
    p: float
    n_eff: int
    T: float
    dt_max: float = 1e-3
    cfl_safety: float = 0.9
    advection_sign: int = 1
    v_face: str = "arithmetic"
    solver_tol: float = DEFAULT_TOL
    undershoot: float = 1e-13
    undershoot_policy: str = "abort"
    ceiling: float = 1e8
    enforce_gate: bool = True

    def __post_init__(self):
        if self.chi < 0:
            raise ConfigError(f"chi must be >= 0, got {self.chi}")
        if not 0 < self.eps < 1:
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.p < 1:
            raise ConfigError(f"p must lie in (0, 1), got {self.p}")
        if self.n_eff < 2:
            raise ConfigError(f"n_eff must be >= 2, got {self.n_eff}")
        if self.chi * self.p >= 1:
            raise ConfigError(f"chi < 1/p required, got chi={self.chi}, 1/p={1 / self.p:g}")
        if not (self.T > 0 and self.dt_max > 0):
            raise ConfigError("T and dt_max must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.advection_sign not in (1, -1):
            raise ConfigError(f"advection_sign must be +1 or -1, got {self.advection_sign}")
        if self.v_face not in V_FACE_MODES:
            raise ConfigError(f"v_face must be one of {V_FACE_MODES}, got {self.v_face}")
        if self.undershoot_policy not in UNDERSHOOT_POLICIES:
            raise ConfigError(f"undershoot_policy must be one of {UNDERSHOOT_POLICIES}")
        if self.enforce_gate and not subcritical_regime(self.chi, self.n_eff):
            raise SupercriticalChi(
                f"chi={self.chi} violates chi < n/(n-2) = {self.n_eff / (self.n_eff - 2):g} "
                f"for n_eff={self.n_eff}; pass allow_supercritical for exploratory runs"
            )

    def with_eps(self, eps: float) -> 'Params':
        return replace(self, eps=eps)


@dataclass(frozen=True, eq=False)
class StateSnapshot:
    """(u, v) at time t after step_index steps"""
    t: float
    u: Field
    v: Field
    step_index: int = 0

    def check(self):
        if self.u.min() < 0:
            raise PositivityViolation(f"u negative at t={self.t:.6g}", min_value=self.u.min(), t=self.t)
        if self.v.min() <= 0:
            raise PositivityViolation(f"v not positive at t={self.t:.6g}", min_value=self.v.min(), t=self.t)


class BlowupStatus(Enum):
    STABLE = "Stable"
    GROWING = "Growing"
    CEILING = "Ceiling"


def _g(u: np.ndarray, eps: float) -> np.ndarray:
    return u / (1.0 + eps * u)


def advection_velocity(v: Field, chi: float, sign: int = 1, v_face: str = "arithmetic") -> np.ndarray:
    """Face velocity χ ∇v / v_face, positive from left cell to right cell"""
    if v.min() <= 0:
        raise PositivityViolation(f"v must be positive for the chemotactic flux (min {v.min():.3g})",
                                  min_value=v.min(), t=float('nan'))
    grid = v.grid
    slope = grid.face_difference(v.values) / grid.face_distances
    return sign * chi * slope / face_average(v.values, grid, v_face)


def advective_flux(u: Field, v: Field, chi: float, eps: float, sign: int = 1,
                   v_face: str = "arithmetic") -> np.ndarray:
    """Upwind face flux area·w·g(u_upwind) with g(u) = u/(1+εu); any eps > 0 accepted"""
    grid = u.grid
    w = advection_velocity(v, chi, sign, v_face)
    left = u.values[grid.face_cells[:, 0]]
    right = u.values[grid.face_cells[:, 1]]
    upwind = np.where(w > 0, left, right)
    return grid.face_areas * w * _g(upwind, eps)


def diffusive_flux(u: Field) -> np.ndarray:
    """Two-point flux -T (u_R - u_L)"""
    grid = u.grid
    return -grid.transmissibility * grid.face_difference(u.values)


def chemotactic_flux(u: Field, v: Field, params: Params) -> np.ndarray:
    """
    Total face flux of u, oriented left → right.

    Boundary faces carry no flux and are not listed.
    """
    return diffusive_flux(u) + advective_flux(u, v, params.chi, params.eps,
                                              params.advection_sign, params.v_face)


def quantize_dt(dt_limit: float, dt_max: float, levels: int = DT_LEVELS_PER_OCTAVE) -> float:
    """
    Round a stability limit down to the ladder dt_max·2^(-k/levels).

    Steps limited by the CFL bound then reuse a handful of diffusion
    factorizations instead of one per step.
    """
    if dt_limit >= dt_max:
        return dt_max
    if not dt_limit > 0:
        return dt_limit
    k = int(np.ceil(levels * np.log2(dt_max / dt_limit)))
    level = dt_max * 2.0 ** (-k / levels)
    if level > dt_limit:
        level = dt_max * 2.0 ** (-(k + 1) / levels)
    return level


class Stepper:
    """Advances StateSnapshots on one grid for one parameter set"""

    def __init__(self, grid: Grid, params: Params, elliptic: Optional[EllipticOperator] = None):
        self.grid = grid
        self.params = params
        self.elliptic = elliptic or assemble(grid, tol=params.solver_tol)
        self._factors: Dict[float, SpdSolver] = {}
        self.factorizations = 0
        self.clamp_events = 0

    def initial_state(self, u0: Field) -> StateSnapshot:
        v0 = solve_v(self.elliptic, u0)
        state = StateSnapshot(0.0, u0, v0, 0)
        state.check()
        return state

    def advective_dt_limit(self, s: StateSnapshot) -> float:
        """Largest dt keeping the explicit upwind update nonnegative"""
        grid = self.grid
        p = self.params
        w = advection_velocity(s.v, p.chi, p.advection_sign, p.v_face)
        rate = grid.face_areas * np.abs(w)
        outflow = np.zeros(grid.n_cells)
        np.add.at(outflow, grid.face_cells[:, 0], np.where(w > 0, rate, 0.0))
        np.add.at(outflow, grid.face_cells[:, 1], np.where(w < 0, rate, 0.0))
        # g(u)/u = 1/(1+εu)
        speed = outflow / ((1.0 + p.eps * s.u.values) * grid.cell_volumes)
        peak = speed.max()
        return np.inf if peak <= 0 else 1.0 / peak

    def choose_dt(self, s: StateSnapshot, t_target: Optional[float] = None) -> float:
        """min(dt_max, cfl·dt_adv rounded down to the dt ladder, t_target - t, T - t)"""
        p = self.params
        t_stop = p.T if t_target is None else min(t_target, p.T)
        remaining = t_stop - s.t
        dt = min(quantize_dt(p.cfl_safety * self.advective_dt_limit(s), p.dt_max), remaining)
        if not dt > 0:
            raise ValueError(f"No time left to step: t={s.t}, target={t_stop}")
        # absorb round-off leftovers instead of taking a sliver step
        if remaining - dt < SNAP_FRACTION * dt:
            dt = remaining
        return dt

    def _diffusion_solver(self, dt: float) -> SpdSolver:
        solver = self._factors.get(dt)
        if solver is None:
            matrix = sparse.diags(self.grid.cell_volumes) + dt * self.grid.stiffness
            solver = SpdSolver(matrix, self.grid, tol=self.params.solver_tol)
            self.factorizations += 1
            if len(self._factors) >= FACTOR_CACHE_SIZE:
                self._factors.pop(next(iter(self._factors)))
            self._factors[dt] = solver
        return solver

    def _repair_undershoot(self, values: np.ndarray, target_mass: float, t: float) -> np.ndarray:
        low = values.min()
        if low >= 0:
            return values
        p = self.params
        if low < -p.undershoot and p.undershoot_policy == "abort":
            logger.error(f"Positivity violation at t={t:.6g}: min u={low:.3e}")
            raise PositivityViolation(f"positivity violation: min u={low:.3e} at t={t:.6g}",
                                      min_value=float(low), t=t)
        if low < -p.undershoot:
            logger.warning(f"Clamping undershoot min u={low:.3e} at t={t:.6g}")
        self.clamp_events += 1
        clamped = np.maximum(values, 0.0)
        mass = float(np.dot(clamped, self.grid.cell_volumes))
        return clamped * (target_mass / mass) if mass > 0 else clamped

    def step(self, s: StateSnapshot, dt: float, t_target: Optional[float] = None) -> StateSnapshot:
        """One IMEX step of size dt; lands exactly on t_target when dt reaches it"""
        grid = self.grid
        mass = integrate(s.u)

        flux = advective_flux(s.u, s.v, self.params.chi, self.params.eps,
                              self.params.advection_sign, self.params.v_face)
        u_star = s.u.values - dt * grid.face_divergence(flux)

        rhs = grid.cell_volumes * u_star
        u_new = self._diffusion_solver(dt).solve(rhs, x0=s.u.values)

        t_new = s.t + dt
        if t_target is not None and dt >= t_target - s.t:
            t_new = t_target
        u_new = self._repair_undershoot(u_new, mass, t_new)
        u_field = Field(u_new, grid)
        v_field = solve_v(self.elliptic, u_field, v_guess=s.v)
        state = StateSnapshot(t_new, u_field, v_field, s.step_index + 1)

        peak = u_field.max()
        if not np.isfinite(peak) or peak > self.params.ceiling:
            logger.warning(f"max u={peak:.3e} crossed ceiling {self.params.ceiling:.1e} at t={t_new:.6g}")
            raise BlowUpSuspected(f"blow-up suspected: max u={peak:.3e} at t={t_new:.6g}",
                                  t=t_new, max_u=peak, snapshot=state)
        return state

    def advance(self, s: StateSnapshot, t_target: Optional[float] = None) -> StateSnapshot:
        """Choose dt under the CFL bound and take one step"""
        return self.step(s, self.choose_dt(s, t_target), t_target)


def advance(s: StateSnapshot, params: Params, stepper: Optional[Stepper] = None) -> StateSnapshot:
    """
    Advance one IMEX step.

    Args:
        s: Current state (u >= 0, v > 0)
        params: Model parameters
        stepper: Reusable stepper for s's grid; built on demand

    Returns:
        The next state with v re-solved from the new u
    """
    s.check()
    stepper = stepper or Stepper(s.u.grid, params)
    return stepper.advance(s)


def detect_blowup(max_u: Sequence[float], times: Sequence[float], ceiling: float = 1e8,
                  growth_threshold: float = 5.0) -> BlowupStatus:
    """
    Classify a window of ‖u‖_∞ samples.

    Ceiling if any sample reached the ceiling, Growing if the least-squares
    slope of ln ‖u‖_∞ against t exceeds growth_threshold, Stable otherwise.
    """
    values = np.asarray(max_u, dtype=float)
    t = np.asarray(times, dtype=float)
    if values.size < 2 or values.size != t.size:
        raise ValueError("detect_blowup needs at least two paired samples")
    if np.any(~np.isfinite(values)) or values.max() >= ceiling:
        return BlowupStatus.CEILING
    if np.ptp(t) <= 0:
        return BlowupStatus.STABLE
    slope = np.polyfit(t, np.log(np.maximum(values, np.finfo(float).tiny)), 1)[0]
    return BlowupStatus.GROWING if slope > growth_threshold else BlowupStatus.STABLE
