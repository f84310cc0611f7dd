"""
Mode routing
Dispatches a resolved RunConfig to simulate, sweep, check or compare-ode and
turns each outcome into a printable payload.
"""

from pathlib import Path
from typing import Any, Callable, Dict, List

import numpy as np
import pandas as pd

from kessel.analysis.functionals import coth_bound, integrate_riccati, ode_comparison_check
from kessel.analysis.weak_residual import load_trajectory, run_checks
from kessel.config.manager import RunConfig
from kessel.core.simulation import run_simulation
from kessel.core.sweep import SweepPlan, run_sweep
from kessel.utils.artifacts import LEDGER_FILE, read_ledger, run_directory
from kessel.utils.errors import InvariantViolation
from kessel.utils.logger import get_logger

logger = get_logger(__name__)

RESIDUAL_REPORT_FILE = 'residual_report.json'
ODE_TABLE_TIMES = (0.01, 0.1, 0.5, 1.0, 2.0)


class CommandRouter:
    """Routes a configuration to the handler of its mode"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.handlers: Dict[str, Callable[[], Dict[str, Any]]] = {
            'simulate': self._handle_simulate,
            'sweep': self._handle_sweep,
            'check': self._handle_check,
            'compare-ode': self._handle_compare_ode,
        }

    def route(self) -> Dict[str, Any]:
        """
        Run the configured mode.

        Returns:
            Payload with at least 'mode', 'text' and 'blowup'

        Raises:
            KesselError: propagated from the handler; the CLI maps it to an exit code
        """
        mode = self.config.run.mode
        logger.info(f"Running mode '{mode}' (profile={self.config.run.profile})")
        payload = self.handlers[mode]()
        payload.setdefault('mode', mode)
        payload.setdefault('blowup', False)
        return payload

    def _handle_simulate(self) -> Dict[str, Any]:
        result = run_simulation(self.config)
        summary = result.summary
        text = "\n".join(f"{key}: {value}" for key, value in summary.items())
        return {'text': f"run directory: {result.run_dir}\n{text}", 'summary': summary,
                'blowup': result.status == 'blowup' or result.blowup.value != 'Stable'}

    def _handle_sweep(self) -> Dict[str, Any]:
        plan = SweepPlan.from_config(self.config)
        report = run_sweep(plan, workers=self.config.sweep.workers)
        frame = report.frame()
        lines = [frame.to_string(index=False, float_format=lambda x: f"{x:.6g}"),
                 f"pairwise L1 distances: {report.distances}",
                 f"cauchy decreasing (last pairs): {report.cauchy_decreasing}"]
        return {'text': "\n".join(lines), 'report': report.to_dict(), 'blowup': report.blowup}

    def _check_dir(self) -> Path:
        if self.config.check.run_dir:
            return Path(self.config.check.run_dir)
        return run_directory(self.config.out_dir, self.config.output.scenario, self.config.model.eps)

    def _handle_check(self) -> Dict[str, Any]:
        run_dir = self._check_dir()
        traj = load_trajectory(run_dir)
        ledger_path = run_dir / LEDGER_FILE
        ledger = read_ledger(ledger_path) if ledger_path.exists() else None
        tol = self.config.tolerances
        report = run_checks(traj, bank_size=self.config.check.bank_size, weak_constant=tol.weak_constant,
                            id_constant=tol.id_constant, ledger=ledger)
        report.meta['run_dir'] = str(run_dir)
        report.to_json(run_dir / RESIDUAL_REPORT_FILE)
        text = report.summary_table()
        if not report.passed:
            message = f"{len(report.failures())} residual checks failed (mass_ok={report.mass_ok}) in {run_dir}"
            if self.config.run.profile == "ci":
                logger.error(message)
                print(text)
                raise InvariantViolation(message)
            logger.warning(message)
        return {'text': text, 'report': report.to_dict()}

    def _handle_compare_ode(self) -> Dict[str, Any]:
        ode = self.config.ode
        rows: List[Dict[str, Any]] = []
        verdicts = []
        for a, b in ode.pairs:
            # 1/(a t0) <= coth_bound(a, b, t0); the coth start is the extremal solution
            for label, y0 in (('near-singular', 1.0 / (a * ode.t0)), ('extremal', coth_bound(a, b, ode.t0))):
                times, y = integrate_riccati(a, b, y0, ode.t0, ode.t_end, ode.samples)
                ok = ode_comparison_check(a, b, times, y)
                verdicts.append(ok)
                for t in ODE_TABLE_TIMES:
                    if t <= ode.t_end:
                        rows.append({'a': a, 'b': b, 'start': label, 't': t,
                                     'y': float(np.interp(t, times, y)), 'bound': coth_bound(a, b, t),
                                     'ok': ok})
        table = pd.DataFrame(rows)
        passed = all(verdicts)
        text = table.to_string(index=False, float_format=lambda x: f"{x:.8g}") + f"\nverdict: {'pass' if passed else 'FAIL'}"
        if not passed:
            logger.error("Riccati comparison bound violated")
            print(text)
            raise InvariantViolation("Riccati comparison bound violated")
        return {'text': text, 'table': table.to_dict(orient='records'), 'passed': passed}
