"""Simulation driver, ε-sweeps and mode routing"""

from .simulation import Simulation, SimulationResult, SimulationSettings, output_times, simulate, run_simulation
from .sweep import (
    SweepPlan,
    SweepReport,
    run_sweep,
    l1_spacetime_distance,
    equi_integrability_stat,
    time_difference_monitor,
    cauchy_trend,
    uniformity_ratios,
    blowup_phase_table,
)
from .command_router import CommandRouter

__all__ = [
    'Simulation',
    'SimulationResult',
    'SimulationSettings',
    'output_times',
    'simulate',
    'run_simulation',
    'SweepPlan',
    'SweepReport',
    'run_sweep',
    'l1_spacetime_distance',
    'equi_integrability_stat',
    'time_difference_monitor',
    'cauchy_trend',
    'uniformity_ratios',
    'blowup_phase_table',
    'CommandRouter',
]
