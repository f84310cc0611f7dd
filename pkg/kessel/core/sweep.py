"""
ε-sweeps
Runs one scenario over a decreasing ε-sequence in worker processes and
assembles the compactness and uniformity diagnostics across the runs.
"""

from dataclasses import dataclass, field, replace
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from kessel.analysis.functionals import select_r
from kessel.analysis.weak_residual import Trajectory, load_trajectory
from kessel.config.manager import RunConfig
from kessel.core.simulation import run_simulation
from kessel.utils.artifacts import META_FILE, read_json, run_directory, write_json
from kessel.utils.errors import BlowUpSuspected, ConfigError, KesselError
from kessel.utils.logger import get_logger

logger = get_logger(__name__)

REPORT_FILE = 'sweep_report.json'
CAUCHY_PAIRS = 4
UNIFORMITY_KEYS = ('A1', 'A2', 'A3', 'A4')


@dataclass
class SweepPlan:
    """One scenario over a strictly decreasing ε-sequence; everything else shared"""
    config: RunConfig
    eps_list: List[float]
    scenario: str

    def __post_init__(self):
        if not self.eps_list:
            raise ConfigError("Sweep needs at least one ε")
        if any(not 0 < eps < 1 for eps in self.eps_list):
            raise ConfigError(f"Every ε must lie in (0, 1), got {self.eps_list}")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ConfigError(f"ε-sequence must be strictly decreasing, got {self.eps_list}")
        # members and report share <out_dir>/<scenario>
        if self.config.output.scenario != self.scenario:
            self.config = replace(self.config, output=replace(self.config.output, scenario=self.scenario))

    @classmethod
    def from_config(cls, config: RunConfig) -> 'SweepPlan':
        return cls(config, list(config.sweep.eps_list), config.output.scenario)

    @property
    def base_dir(self) -> Path:
        return Path(self.config.out_dir) / self.scenario

    def run_dir(self, eps: float) -> Path:
        return run_directory(self.config.out_dir, self.scenario, eps)


@dataclass
class SweepReport:
    """Per-ε outcomes plus cross-ε diagnostics"""
    scenario: str
    chi: float
    p: float
    eps_list: List[float]
    members: List[Dict[str, Any]] = field(default_factory=list)
    distances: List[Optional[float]] = field(default_factory=list)
    equi_integrability: List[Optional[float]] = field(default_factory=list)
    time_differences: List[Optional[float]] = field(default_factory=list)
    r: Optional[float] = None

    @property
    def completed(self) -> List[Dict[str, Any]]:
        return [m for m in self.members if m['status'] == 'completed']

    @property
    def cauchy_decreasing(self) -> bool:
        return cauchy_trend(self.distances)

    @property
    def blowup(self) -> bool:
        return any(m['status'] == 'blowup' or m['blowup'] != 'Stable' for m in self.members)

    def frame(self) -> pd.DataFrame:
        """One row per ε"""
        rows = []
        for index, member in enumerate(self.members):
            summary = member.get('summary') or {}
            row = {
                'eps': member['eps'],
                'status': member['status'],
                'blowup': member['blowup'],
                'max_u': summary.get('max_u', np.nan),
                'v_floor': summary.get('v_floor', np.nan),
                'entropy_floor': summary.get('entropy_floor', np.nan),
                'lemma35_max': summary.get('lemma35_max', np.nan),
                'equi_integrability': self.equi_integrability[index],
                'time_difference': self.time_differences[index],
            }
            row.update((summary.get('accumulators') or {}))
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'scenario': self.scenario,
            'chi': self.chi,
            'p': self.p,
            'r': self.r,
            'eps_list': self.eps_list,
            'members': self.members,
            'distances': self.distances,
            'cauchy_decreasing': self.cauchy_decreasing,
            'equi_integrability': self.equi_integrability,
            'time_differences': self.time_differences,
            'uniformity': uniformity_ratios(self),
            'blowup': self.blowup,
        }

    def to_json(self, path: Path):
        write_json(path, self.to_dict())


def _check_alignment(a: Trajectory, b: Trajectory):
    if not a.grid.same_as(b.grid):
        raise ValueError("Trajectories live on different grids")
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ValueError("Trajectories are sampled at different times")


def l1_spacetime_distance(a: Trajectory, b: Trajectory) -> float:
    """
    Σ_k dt_k Σ_i vol_i |u_A - u_B| over the shared samples.

    Raises:
        ValueError: different grids or sample times
    """
    _check_alignment(a, b)
    per_sample = np.abs(a.u - b.u) @ a.grid.cell_volumes
    return float(np.dot(a.weights, per_sample))


def equi_integrability_stat(traj: Trajectory, r: float) -> float:
    """Space-time integral of u^r"""
    if not r > 1:
        raise ValueError(f"r must exceed 1, got {r}")
    per_sample = np.maximum(traj.u, 0.0) ** r @ traj.grid.cell_volumes
    return float(np.dot(traj.weights, per_sample))


def time_difference_monitor(traj: Trajectory, p: float) -> float:
    """Σ_k ‖(u_{k+1}+1)^(p/2) - (u_k+1)^(p/2)‖_L¹"""
    w = (np.maximum(traj.u, 0.0) + 1.0) ** (p / 2)
    return float(np.sum(np.abs(np.diff(w, axis=0)) @ traj.grid.cell_volumes))


def cauchy_trend(distances: Sequence[Optional[float]], pairs: int = CAUCHY_PAIRS) -> bool:
    """True iff the last `pairs` distances are present and strictly decreasing"""
    tail = list(distances)[-pairs:]
    if any(d is None for d in tail):
        return False
    return bool(np.all(np.diff(np.asarray(tail, dtype=float)) < 0))


def _ratio(values: Sequence[float]) -> float:
    values = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if values.size == 0:
        return float('nan')
    high, low = values.max(), values.min()
    if high == 0:
        return 1.0
    return float(high / low) if low > 0 else float('inf')


def uniformity_ratios(report: SweepReport) -> Dict[str, float]:
    """max/min across completed runs of A1-A4 at T and of the equi-integrability statistic"""
    completed = report.completed
    ratios = {
        key: _ratio([m['summary']['accumulators'][key] for m in completed])
        for key in UNIFORMITY_KEYS
    }
    ratios['equi_integrability'] = _ratio(report.equi_integrability)
    return ratios


def blowup_phase_table(reports: Sequence[SweepReport], value: str = 'blowup') -> pd.DataFrame:
    """χ × ε table of blow-up status (or any member summary field such as max_u)"""
    rows = []
    for report in reports:
        for member in report.members:
            if value in ('blowup', 'status'):
                cell = member[value]
            else:
                cell = (member.get('summary') or {}).get(value, np.nan)
            rows.append({'chi': report.chi, 'eps': member['eps'], value: cell})
    frame = pd.DataFrame(rows)
    if frame.empty:
        return frame
    table = frame.pivot(index='chi', columns='eps', values=value)
    return table.reindex(sorted(table.columns, reverse=True), axis=1)


def _sweep_worker(job: Tuple[RunConfig, float]) -> Dict[str, Any]:
    """
    Top-level worker: run one ε and report its outcome.

    Failures are captured so that they poison only this member.
    """
    config, eps = job
    run_dir = run_directory(config.out_dir, config.output.scenario, eps)
    member = {'eps': eps, 'run_dir': str(run_dir), 'status': 'completed', 'blowup': 'Stable',
              'error': None, 'summary': None}
    try:
        result = run_simulation(config, eps=eps)
        member.update(status=result.status, blowup=result.blowup.value, error=result.error,
                      summary=result.summary)
    except KesselError as e:
        logger.error(f"Sweep member eps={eps:.6g} failed: {e}")
        _record_failure(member, run_dir, 'blowup' if isinstance(e, BlowUpSuspected) else 'failed', e)
    except Exception as e:
        logger.exception(f"Sweep member eps={eps:.6g} crashed: {e}")
        _record_failure(member, run_dir, 'failed', e)
    return member


def _record_failure(member: Dict[str, Any], run_dir: Path, status: str, error: Exception):
    """Mark a member failed, keeping whatever summary its meta.json holds"""
    meta_path = run_dir / META_FILE
    try:
        meta = read_json(meta_path) if meta_path.exists() else {}
    except (OSError, ValueError):
        meta = {}
    summary = meta.get('summary')
    member.update(status=status, error=f"{type(error).__name__}: {error}", summary=summary,
                  blowup=(summary or {}).get('blowup', 'Stable'))


def _assemble(plan: SweepPlan, members: List[Dict[str, Any]]) -> SweepReport:
    params = plan.config.to_params()
    try:
        r = select_r(params.p, params.n_eff)
    except ValueError:
        r = None
    report = SweepReport(plan.scenario, params.chi, params.p, list(plan.eps_list), members, r=r)

    trajectories: List[Optional[Trajectory]] = []
    for member in members:
        traj = None
        if member['status'] == 'completed' and plan.config.output.write_snapshots:
            try:
                traj = load_trajectory(member['run_dir'])
            except (OSError, ValueError) as e:
                logger.error(f"Cannot load trajectory for eps={member['eps']:.6g}: {e}")
        trajectories.append(traj)
        report.equi_integrability.append(None if traj is None or r is None else equi_integrability_stat(traj, r))
        report.time_differences.append(None if traj is None else time_difference_monitor(traj, params.p))

    for first, second in zip(trajectories, trajectories[1:]):
        if first is None or second is None:
            report.distances.append(None)
            continue
        try:
            report.distances.append(l1_spacetime_distance(first, second))
        except ValueError as e:
            logger.error(f"Pairwise distance skipped: {e}")
            report.distances.append(None)
    return report


def run_sweep(plan: SweepPlan, workers: int = 1) -> SweepReport:
    """
    Run every ε of the plan and assemble the report.

    Args:
        plan: Scenario and ε-sequence
        workers: Process count; 1 runs inline

    Returns:
        SweepReport, also written to <out_dir>/<scenario>/sweep_report.json
    """
    jobs = [(plan.config, eps) for eps in plan.eps_list]
    logger.info(f"Sweep '{plan.scenario}': {len(jobs)} runs on {workers} worker(s)")

    if workers > 1:
        with Pool(workers) as pool:
            members = pool.map(_sweep_worker, jobs)
    else:
        members = [_sweep_worker(job) for job in jobs]

    report = _assemble(plan, members)
    report.to_json(plan.base_dir / REPORT_FILE)
    failed = [m['eps'] for m in members if m['status'] != 'completed']
    if failed:
        logger.warning(f"Sweep '{plan.scenario}': runs not completed for eps={failed}")
    logger.info(f"Sweep '{plan.scenario}' done: distances={report.distances}, "
                f"cauchy_decreasing={report.cauchy_decreasing}")
    return report
