"""
Simulation driver
Runs one (grid, u₀, Params) trajectory: time loop, ledger, snapshots,
invariant policy and blow-up monitor, with artifacts written on exit.
"""

from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from kessel import __version__
from kessel.analysis.functionals import (
    U_FLOOR,
    FunctionalLedger,
    check_ledger_invariants,
    ledger_record,
    summarize_ledger,
)
from kessel.config.manager import RunConfig
from kessel.mesh.geometry import Field, Grid, integrate
from kessel.solvers.initial_data import build_initial_data
from kessel.solvers.stepper import BlowupStatus, Params, StateSnapshot, Stepper, detect_blowup
from kessel.utils.artifacts import (
    LEDGER_FILE,
    META_FILE,
    SNAPSHOT_FILE,
    SnapshotWriter,
    run_directory,
    write_json,
    write_ledger,
)
from kessel.utils.errors import BlowUpSuspected, InvariantViolation, KesselError, MassDrift
from kessel.utils.logger import get_logger

logger = get_logger(__name__)

PROGRESS_FRACTION = 0.1


@dataclass
class SimulationSettings:
    """Cadence and invariant policy of one run"""
    output_interval: float
    mass_rel: float = 1e-10
    v_mass_rel: float = 1e-8
    lemma35_allowance: float = 0.05
    u_floor: float = U_FLOOR
    fail_fast: bool = True
    write_snapshots: bool = True
    snapshot_every: int = 1
    growth_threshold: float = 5.0
    window: int = 20

    @classmethod
    def from_config(cls, config: RunConfig) -> 'SimulationSettings':
        tol = config.tolerances
        return cls(
            output_interval=config.time.output_interval,
            mass_rel=tol.mass_rel,
            v_mass_rel=tol.v_mass_rel,
            lemma35_allowance=tol.lemma35_allowance,
            u_floor=tol.u_floor,
            fail_fast=config.run.profile == "ci",
            write_snapshots=config.output.write_snapshots,
            snapshot_every=config.output.snapshot_every,
            growth_threshold=config.sweep.growth_threshold,
            window=config.sweep.window,
        )


@dataclass
class SimulationResult:
    """Outcome of one run"""
    params: Params
    grid: Grid
    ledger: pd.DataFrame
    final: StateSnapshot
    status: str = "completed"
    blowup: BlowupStatus = BlowupStatus.STABLE
    run_dir: Optional[Path] = None
    steps: int = 0
    clamp_events: int = 0
    violations: List[str] = field(default_factory=list)
    states: List[StateSnapshot] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def summary(self) -> Dict[str, Any]:
        summary = summarize_ledger(self.ledger) if len(self.ledger) else {}
        summary.update({
            'status': self.status,
            'blowup': self.blowup.value,
            'steps': self.steps,
            'clamp_events': self.clamp_events,
            'violations': list(self.violations),
        })
        return summary


def output_times(T: float, interval: float) -> np.ndarray:
    """k·interval for k >= 1 below T, then T itself"""
    count = int(np.floor(T / interval + 1e-9))
    times = interval * np.arange(1, count + 1)
    times = times[times < T * (1 - 1e-12)]
    return np.append(times, T)


class Simulation:
    """Drives a Stepper over [0, T] and collects diagnostics"""

    def __init__(self, grid: Grid, u0: Field, params: Params, settings: SimulationSettings,
                 run_dir: Optional[Path] = None, config: Optional[Dict[str, Any]] = None,
                 keep_states: bool = False):
        self.grid = grid
        self.u0 = u0
        self.params = params
        self.settings = settings
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.config = config or {}
        self.keep_states = keep_states

        self.stepper = Stepper(grid, params)
        self.ledger = FunctionalLedger.for_params(params, settings.u_floor)
        self.violations: List[str] = []
        self.states: List[StateSnapshot] = []
        self._window: Deque[Tuple[float, float]] = deque(maxlen=settings.window)
        self._status = BlowupStatus.STABLE
        self._samples = 0
        self._writer: Optional[SnapshotWriter] = None

    def _violation(self, error: InvariantViolation):
        message = str(error)
        if self.settings.fail_fast:
            logger.error(message)
            raise error
        if message not in self.violations:
            logger.warning(f"{message} (continuing, exploratory profile)")
        self.violations.append(message)

    def _check_masses(self, state: StateSnapshot, mass0: float):
        mass_u = integrate(state.u)
        drift = abs(mass_u - mass0) / mass0
        if drift > self.settings.mass_rel:
            self._violation(MassDrift(f"mass drift {drift:.3e} > {self.settings.mass_rel:.1e} at t={state.t:.6g}"))
        v_gap = abs(integrate(state.v) - mass_u) / mass_u
        if v_gap > self.settings.v_mass_rel:
            self._violation(MassDrift(f"∫v - ∫u gap {v_gap:.3e} > {self.settings.v_mass_rel:.1e} at t={state.t:.6g}"))

    def _check_row(self):
        row = self.ledger.last
        bound = self.grid.measure * (1 + self.settings.lemma35_allowance)
        if row['lemma35'] > bound:
            self._violation(InvariantViolation(
                f"∫|∇v|²/v² = {row['lemma35']:.6g} exceeds |Ω|(1+δ) = {bound:.6g} at t={row['t']:.6g}"
            ))
        if not np.isfinite(row['entropy_low']):
            self._violation(InvariantViolation(f"∫ln u not finite at t={row['t']:.6g}"))

    def _sample(self, state: StateSnapshot):
        """Output-time bookkeeping: snapshot file, kept states, blow-up window"""
        if self._writer is not None and self._samples % self.settings.snapshot_every == 0:
            self._writer.write(state.t, state.u.values, state.v.values)
        if self.keep_states:
            self.states.append(state)
        self._samples += 1

        self._window.append((state.t, state.u.max()))
        if len(self._window) >= 2:
            times, peaks = zip(*self._window)
            status = detect_blowup(peaks, times, self.params.ceiling, self.settings.growth_threshold)
            if status is not self._status:
                logger.warning(f"Blow-up monitor: {self._status.value} → {status.value} at t={state.t:.6g}, "
                               f"max u={state.u.max():.4g}")
                self._status = status
        logger.debug(f"t={state.t:.6g}: min u={state.u.min():.3e}, min v={state.v.min():.4g}, "
                     f"max u={state.u.max():.4g}")

    def run(self) -> SimulationResult:
        """
        Integrate to T.

        Raises:
            InvariantViolation: mass, lemma35 or positivity failure (ci profile)
            BlowUpSuspected: ceiling crossed (ci profile)
            SolverDivergence: linear solve failed
        """
        p = self.params
        mass0 = integrate(self.u0)
        targets = output_times(p.T, self.settings.output_interval)
        next_progress = PROGRESS_FRACTION * p.T
        result_status, error = "completed", None
        state = self.stepper.initial_state(self.u0)

        if self.run_dir is not None and self.settings.write_snapshots:
            self._writer = SnapshotWriter(self.run_dir / SNAPSHOT_FILE, self.grid.descriptor_hash)
        logger.info(f"Simulating chi={p.chi}, eps={p.eps:.6g}, p={p.p:.6g}, T={p.T} on "
                    f"{self.grid.n_cells} cells ({len(targets)} output times)")
        try:
            self._sample(state)
            index = 0
            while index < len(targets):
                dt = self.stepper.choose_dt(state, targets[index])
                ledger_record(state, p, self.ledger, dt)
                self._check_row()
                try:
                    state = self.stepper.step(state, dt, targets[index])
                except BlowUpSuspected as e:
                    result_status, error = "blowup", str(e)
                    self._status = BlowupStatus.CEILING
                    if e.snapshot is not None:
                        state = e.snapshot
                    if self.settings.fail_fast:
                        raise
                    break
                self._check_masses(state, mass0)

                if state.t == targets[index]:
                    self._sample(state)
                    index += 1
                if state.t >= next_progress:
                    drift = abs(integrate(state.u) - mass0) / mass0
                    logger.info(f"t={state.t:.4g} step={state.step_index} dt={dt:.3e} mass drift={drift:.2e} "
                                f"min u={state.u.min():.3e} min v={state.v.min():.4g} max u={state.u.max():.4g}")
                    next_progress += PROGRESS_FRACTION * p.T

            ledger_record(state, p, self.ledger, 0.0)
            self._check_row()
        except KesselError as e:
            if result_status == "completed":
                result_status = "blowup" if isinstance(e, BlowUpSuspected) else "failed"
            error = str(e)
            raise
        finally:
            if self._writer is not None:
                self._writer.close()
            result = self._result(state, result_status, error)
            if self.run_dir is not None:
                self.write_artifacts(result)

        if result_status == "completed":
            for problem in check_ledger_invariants(result.ledger, self.grid.measure, self.settings.lemma35_allowance):
                self._violation(InvariantViolation(problem))
        return result

    def _result(self, state: StateSnapshot, status: str, error: Optional[str]) -> SimulationResult:
        return SimulationResult(
            params=self.params,
            grid=self.grid,
            ledger=self.ledger.to_frame(),
            final=state,
            status=status,
            blowup=self._status,
            run_dir=self.run_dir,
            steps=state.step_index,
            clamp_events=self.stepper.clamp_events,
            violations=list(self.violations),
            states=self.states,
            error=error,
        )

    def write_artifacts(self, result: SimulationResult):
        """ledger.csv, meta.json (and snaps.bin, already closed) in the run directory"""
        write_ledger(self.run_dir / LEDGER_FILE, result.ledger)
        meta = {
            'version': __version__,
            'status': result.status,
            'error': result.error,
            'exploratory': not self.settings.fail_fast or not self.params.enforce_gate,
            'config': self.config,
            'grid': {'domain': self.grid.domain.to_dict(), 'shape': list(self.grid.shape)},
            'params': asdict(self.params),
            'summary': result.summary,
        }
        write_json(self.run_dir / META_FILE, meta)
        logger.info(f"Artifacts written to {self.run_dir} (status={result.status})")


def simulate(grid: Grid, u0: Field, params: Params, settings: SimulationSettings,
             run_dir: Optional[Path] = None, config: Optional[Dict[str, Any]] = None,
             keep_states: bool = False) -> SimulationResult:
    """Run one simulation; see Simulation.run"""
    return Simulation(grid, u0, params, settings, run_dir, config, keep_states).run()


def run_simulation(config: RunConfig, eps: Optional[float] = None, write: bool = True,
                   keep_states: bool = False) -> SimulationResult:
    """
    Build grid, u₀ and Params from a config and simulate.

    Artifacts go to <out_dir>/<scenario>/<eps>/ when `write` is set.
    """
    params = config.to_params(eps)
    grid = config.build_grid()
    u0 = build_initial_data(grid, config.initial_data.profile, config.initial_data.params)
    run_dir = run_directory(config.out_dir, config.output.scenario, params.eps) if write else None
    resolved = config.to_dict()
    resolved['model']['eps'] = params.eps
    return simulate(grid, u0, params, SimulationSettings.from_config(config), run_dir,
                    resolved, keep_states)
