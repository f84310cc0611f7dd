"""Tracked functionals and weak-form residual checks"""

from .functionals import (
    LEDGER_COLUMNS,
    EXTRA_COLUMNS,
    FunctionalLedger,
    DensityTerms,
    phi_eps,
    phi_eps_array,
    ledger_record,
    select_r,
    coth_bound,
    integrate_riccati,
    ode_comparison_check,
    constant_test_combination,
    check_ledger_invariants,
    empirical_log_gradient_constant,
    summarize_ledger,
)
from .weak_residual import (
    TestFunction,
    Trajectory,
    ResidualEntry,
    ResidualReport,
    build_test_bank,
    constant_test_function,
    load_trajectory,
    check_weak_v_identity,
    check_supersolution_ineq,
    check_eps_testing_ineq,
    check_mass_ineq,
    boundary_trace_report,
    tol_weak,
    tol_id,
    run_checks,
)

__all__ = [
    'LEDGER_COLUMNS',
    'EXTRA_COLUMNS',
    'FunctionalLedger',
    'DensityTerms',
    'phi_eps',
    'phi_eps_array',
    'ledger_record',
    'select_r',
    'coth_bound',
    'integrate_riccati',
    'ode_comparison_check',
    'constant_test_combination',
    'check_ledger_invariants',
    'empirical_log_gradient_constant',
    'summarize_ledger',
    'TestFunction',
    'Trajectory',
    'ResidualEntry',
    'ResidualReport',
    'build_test_bank',
    'constant_test_function',
    'load_trajectory',
    'check_weak_v_identity',
    'check_supersolution_ineq',
    'check_eps_testing_ineq',
    'check_mass_ineq',
    'boundary_trace_report',
    'tol_weak',
    'tol_id',
    'run_checks',
]
