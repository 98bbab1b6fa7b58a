# Core Services
from src.services.analytic import analytic_rate
from src.services.cell_lp import build_cell_lp, build_feasibility_lp
from src.services.finite_stats import (
    binomial_half_width,
    check_abort,
    check_coincidence_consistency,
    completeness_bound,
    hoeffding_delta,
    tolerances_for,
)
from src.services.keyrate import (
    KeyRateEngine,
    ObjectiveBound,
    assemble_rate,
    build_partition,
    compute_error_upper_bound,
    compute_rate,
    compute_yield_lower_bound,
    lower_bound_objective,
    xi_max,
)
from src.services.lp_solver import (
    SimplexSolver,
    lagrangian_bound,
    primal_residual,
    solve_lp,
    verify_certificate,
)
from src.services.protocol_sim import (
    ProtocolSimulator,
    expected_observed_statistics,
    run_protocol,
    simulate_round,
)
from src.services.stats_file import StatsFileService, observed_to_stats
from src.services.sweep import RateRow, SweepService

__all__ = [
    "KeyRateEngine",
    "ObjectiveBound",
    "ProtocolSimulator",
    "RateRow",
    "SimplexSolver",
    "StatsFileService",
    "SweepService",
    "analytic_rate",
    "assemble_rate",
    "binomial_half_width",
    "build_cell_lp",
    "build_feasibility_lp",
    "build_partition",
    "check_abort",
    "check_coincidence_consistency",
    "completeness_bound",
    "compute_error_upper_bound",
    "compute_rate",
    "compute_yield_lower_bound",
    "expected_observed_statistics",
    "hoeffding_delta",
    "lagrangian_bound",
    "lower_bound_objective",
    "observed_to_stats",
    "primal_residual",
    "run_protocol",
    "simulate_round",
    "solve_lp",
    "tolerances_for",
    "verify_certificate",
    "xi_max",
]
