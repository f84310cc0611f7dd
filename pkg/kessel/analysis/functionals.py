"""
Tracked integrals
Φ_ε, the functional ledger with its space-time accumulators, and the
Riccati comparison utilities.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad, solve_ivp
from scipy.special import hyp2f1

from kessel.mesh.geometry import Field, Grid, face_average, gradient_lr_integral, gradient_sq_over_sq, integrate
from kessel.solvers.elliptic import select_q, v_lq_integral
from kessel.solvers.stepper import Params, StateSnapshot
from kessel.utils.logger import get_logger

logger = get_logger(__name__)

U_FLOOR = 1e-300

LEDGER_COLUMNS = ['t', 'mass_u', 'mass_v', 'min_v', 'max_u', 'lemma35', 'entropy_low',
                  'A1', 'A2', 'A3', 'A4', 'A5']
EXTRA_COLUMNS = ['I_phi', 'I_up', 'up_mass', 'v_lq', 'grad_v_lr', 'log_grad_u',
                 'boundary_min_u', 'floored_cells', 'dt']
ACCUMULATORS = ['A1', 'A2', 'A3', 'A4', 'A5', 'I_phi', 'I_up']


def phi_eps(s: float, p: float, eps: float) -> float:
    """
    Φ_ε(s) = p ∫_0^s σ^(p-1) / (1 + εσ) dσ.

    Substituting σ = τ^(1/p) removes the endpoint singularity:
    Φ_ε(s) = ∫_0^(s^p) dτ / (1 + ε τ^(1/p)).
    """
    if s < 0:
        raise ValueError(f"phi_eps needs s >= 0, got {s}")
    if s == 0:
        return 0.0
    upper = s ** p
    value, _ = quad(lambda tau: 1.0 / (1.0 + eps * tau ** (1.0 / p)), 0.0, upper,
                    epsabs=0.0, epsrel=1e-12, limit=200)
    return float(value)


def phi_eps_array(s: np.ndarray, p: float, eps: float) -> np.ndarray:
    """Vectorized Φ_ε(s) = s^p ₂F₁(1, p; p+1; -εs)"""
    s = np.asarray(s, dtype=float)
    return np.where(s > 0, np.maximum(s, 0.0) ** p * hyp2f1(1.0, p, p + 1.0, -eps * np.maximum(s, 0.0)), 0.0)


def select_r(p: float, n_eff: int) -> float:
    """
    Midpoint of (1, min(p+1, n(p+1)/(2n-2))).

    Raises:
        ValueError: the interval is empty
    """
    upper = min(p + 1.0, n_eff * (p + 1.0) / (2 * n_eff - 2))
    if not upper > 1.0:
        raise ValueError(f"No admissible r for p={p}, n_eff={n_eff}")
    return 0.5 * (1.0 + upper)


def select_gradient_exponent(n_eff: int) -> float:
    """Midpoint of [1, n/(n-1)) for the ∫|∇v|^r diagnostic"""
    return 0.5 * (1.0 + n_eff / (n_eff - 1))


def coth_bound(a: float, b: float, t: float) -> float:
    """√(b/a) coth(√(ab) t)"""
    if min(a, b, t) <= 0:
        raise ValueError("coth_bound needs a, b, t > 0")
    return float(np.sqrt(b / a) / np.tanh(np.sqrt(a * b) * t))


def integrate_riccati(a: float, b: float, y0: float, t0: float, t_end: float,
                      samples: int = 200) -> Tuple[np.ndarray, np.ndarray]:
    """Integrate y' = -a y² + b from y(t0) = y0 with an implicit Runge-Kutta method"""
    t_eval = np.geomspace(t0, t_end, samples)
    t_eval[0], t_eval[-1] = t0, t_end
    sol = solve_ivp(lambda _, y: -a * y ** 2 + b, (t0, t_end), [y0], method='Radau',
                    t_eval=t_eval, rtol=1e-11, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"Riccati integration failed: {sol.message}")
    return sol.t, sol.y[0]


def ode_comparison_check(a: float, b: float, times: np.ndarray, y: np.ndarray,
                         rel_tol: float = 1e-6) -> bool:
    """True iff y(t) <= coth_bound(a, b, t)·(1 + rel_tol) at every sample"""
    bound = np.sqrt(b / a) / np.tanh(np.sqrt(a * b) * np.asarray(times, dtype=float))
    return bool(np.all(np.asarray(y) <= bound * (1.0 + rel_tol)))


class DensityTerms:
    """
    Discrete integrands of one (u, v) sample.

    Gradients of u^(p/2) are two-point differences of the cell values of
    u^(p/2); face values of v and u^p use arithmetic means. Optional weights
    take the cell values or face values of a test function.
    """

    def __init__(self, u: np.ndarray, v: np.ndarray, grid: Grid, p: float, eps: float):
        self.grid = grid
        self.p = p
        self.eps = eps
        self.u = np.maximum(u, 0.0)
        self.v = v
        self.w = self.u ** (p / 2)
        self.up_cells = self.u ** p
        self.dist = grid.face_distances
        self.grad_w = grid.face_difference(self.w) / self.dist
        self.grad_v = grid.face_difference(v) / self.dist
        self.v_face = face_average(v, grid)
        self.w_face = face_average(self.w, grid)
        self.up_face = face_average(self.up_cells, grid)

    def _cells(self, values: np.ndarray, weight: Optional[np.ndarray]) -> float:
        w = 1.0 if weight is None else weight
        return float(np.sum(self.grid.cell_volumes * values * w))

    def _faces(self, values: np.ndarray, weight: Optional[np.ndarray]) -> float:
        w = 1.0 if weight is None else weight
        return float(np.sum(self.grid.face_dual_volumes * values * w))

    def grad_w_sq(self, face_weight=None) -> float:
        """∫|∇u^(p/2)|² φ"""
        return self._faces(self.grad_w ** 2, face_weight)

    def mixed_sq(self, face_weight=None) -> float:
        """∫|∇u^(p/2) - u^(p/2)∇v/(2v)|² φ"""
        mixed = self.grad_w - self.w_face * self.grad_v / (2.0 * self.v_face)
        return self._faces(mixed ** 2, face_weight)

    def up_over_v(self, cell_weight=None) -> float:
        """∫u^(p+1)/v φ"""
        return self._cells(self.u ** (self.p + 1) / self.v, cell_weight)

    def up_grad_log_v_sq(self, face_weight=None) -> float:
        """∫u^p |∇v|²/v² φ"""
        return self._faces(self.up_face * (self.grad_v / self.v_face) ** 2, face_weight)

    def up(self, cell_weight=None) -> float:
        """∫u^p φ"""
        return self._cells(self.up_cells, cell_weight)

    def phi(self, cell_weight=None) -> float:
        """∫Φ_ε(u) φ"""
        return self._cells(phi_eps_array(self.u, self.p, self.eps), cell_weight)

    def power(self, r: float, cell_weight=None) -> float:
        """∫u^r φ"""
        return self._cells(self.u ** r, cell_weight)

    def drift_pairing(self, coefficient: np.ndarray, normal_derivative: np.ndarray) -> float:
        """∫ c ∇v/v · ∇φ with c given per cell and ∂φ given per face"""
        c_face = face_average(coefficient, self.grid)
        return self._faces(c_face * self.grad_v / self.v_face * normal_derivative, None)


@dataclass
class FunctionalLedger:
    """Rows of instantaneous integrals plus running space-time accumulators"""
    p: float
    r: Optional[float]
    q: float
    r_grad: float
    u_floor: float = U_FLOOR
    rows: List[Dict[str, float]] = field(default_factory=list)
    totals: Dict[str, float] = field(default_factory=lambda: {name: 0.0 for name in ACCUMULATORS})
    flagged: bool = False

    @classmethod
    def for_params(cls, params: Params, u_floor: float = U_FLOOR) -> 'FunctionalLedger':
        try:
            r = select_r(params.p, params.n_eff)
        except ValueError:
            logger.warning(f"No admissible r for p={params.p}, n_eff={params.n_eff}; A5 disabled")
            r = None
        return cls(p=params.p, r=r, q=select_q(params.n_eff),
                   r_grad=select_gradient_exponent(params.n_eff), u_floor=u_floor)

    @property
    def columns(self) -> List[str]:
        return LEDGER_COLUMNS + EXTRA_COLUMNS

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    @property
    def last(self) -> Dict[str, float]:
        return self.rows[-1]


def ledger_record(s: StateSnapshot, params: Params, ledger: FunctionalLedger,
                  dt_weight: float) -> FunctionalLedger:
    """
    Append the row for time s.t and advance the accumulators.

    The row carries the accumulators over [0, s.t); the sample then enters
    them with weight dt_weight (left-endpoint rule).
    """
    grid = s.u.grid
    u, v = s.u.values, s.v.values
    terms = DensityTerms(u, v, grid, params.p, params.eps)

    floored = int(np.count_nonzero(u < ledger.u_floor))
    if floored and not ledger.flagged:
        logger.warning(f"{floored} cells below u_floor={ledger.u_floor:g} at t={s.t:.6g}")
        ledger.flagged = True
    u_safe = np.maximum(u, ledger.u_floor)

    row = {
        't': s.t,
        'mass_u': integrate(s.u),
        'mass_v': integrate(s.v),
        'min_v': s.v.min(),
        'max_u': s.u.max(),
        'lemma35': gradient_sq_over_sq(s.v, floor=max(min(s.v.min(), 1.0), ledger.u_floor)),
        'entropy_low': float(np.sum(grid.cell_volumes * np.log(u_safe))),
    }
    row.update({name: ledger.totals[name] for name in ACCUMULATORS})
    if ledger.r is None:
        row['A5'] = float('nan')
    row.update({
        'up_mass': terms.up(),
        'v_lq': v_lq_integral(s.v, ledger.q),
        'grad_v_lr': gradient_lr_integral(s.v, ledger.r_grad),
        'log_grad_u': gradient_sq_over_sq(Field(u_safe, grid), floor=ledger.u_floor),
        'boundary_min_u': float(u[grid.boundary_cells].min()),
        'floored_cells': floored,
        'dt': dt_weight,
    })
    ledger.rows.append(row)

    if dt_weight > 0:
        increments = {
            'A1': terms.grad_w_sq(),
            'A2': terms.mixed_sq(),
            'A3': terms.up_over_v(),
            'A4': terms.up_grad_log_v_sq(),
            'A5': terms.power(ledger.r) if ledger.r is not None else 0.0,
            'I_phi': terms.phi(),
            'I_up': row['up_mass'],
        }
        for name, value in increments.items():
            ledger.totals[name] += dt_weight * value
    return ledger


def constant_test_combination(frame: pd.DataFrame, p: float, chi: float) -> Dict[str, float]:
    """
    The φ ≡ 1 testing inequality read off the ledger at its last row:

        c1 A1 + c2 A2 + (1-p)χ I_phi - 2(1-p)χ I_up + (1-p)χ A3 <= ∫u^p(T) - ∫u₀^p

    with c1 = 4(1-p)(1-pχ)/p and c2 = 4(1-p)χ.
    """
    first, last = frame.iloc[0], frame.iloc[-1]
    c1 = 4.0 * (1 - p) * (1 - p * chi) / p
    c2 = 4.0 * (1 - p) * chi
    k = (1 - p) * chi
    rhs = c1 * last['A1'] + c2 * last['A2'] + k * last['I_phi'] - 2 * k * last['I_up'] + k * last['A3']
    lhs = last['up_mass'] - first['up_mass']
    return {'lhs': float(lhs), 'rhs': float(rhs), 'slack': float(lhs - rhs)}


def check_ledger_invariants(frame: pd.DataFrame, measure: float, allowance: float = 0.05) -> List[str]:
    """Violations of accumulator monotonicity, the |Ω| bound on lemma35 and entropy finiteness"""
    problems = []
    for name in ACCUMULATORS:
        values = frame[name].dropna().to_numpy()
        if values.size and np.any(np.diff(values) < 0):
            problems.append(f"{name} decreases")
    worst = frame['lemma35'].max()
    if worst > measure * (1 + allowance):
        problems.append(f"lemma35 reached {worst:.6g} > |Ω|(1+{allowance:g}) = {measure * (1 + allowance):.6g}")
    if not np.all(np.isfinite(frame['entropy_low'])):
        problems.append("entropy_low not finite")
    return problems


def empirical_log_gradient_constant(u: Field, delta: float, floor: float = U_FLOOR) -> float:
    """
    ∫|∇ln u|² / (∫ ln(δ/u))², or nan when ∫ln(δ/u) <= 0.

    An observed value only; it makes no claim about any sharp constant.
    """
    values = np.maximum(u.values, floor)
    log_mass = float(np.sum(u.grid.cell_volumes * np.log(delta / values)))
    if log_mass <= 0:
        return float('nan')
    return gradient_sq_over_sq(Field(values, u.grid), floor=floor) / log_mass ** 2


def summarize_ledger(frame: pd.DataFrame) -> Dict[str, Any]:
    """Run-level minima and maxima reported in meta.json"""
    return {
        'mass_drift': float(np.abs(frame['mass_u'] - frame['mass_u'].iloc[0]).max() / frame['mass_u'].iloc[0]),
        'v_floor': float(frame['min_v'].min()),
        'max_u': float(frame['max_u'].max()),
        'lemma35_max': float(frame['lemma35'].max()),
        'entropy_floor': float(frame['entropy_low'].min()),
        'floored_cells': int(frame['floored_cells'].max()),
        'accumulators': {name: float(frame[name].iloc[-1]) for name in ['A1', 'A2', 'A3', 'A4', 'A5']},
    }
