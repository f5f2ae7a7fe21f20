"""Mean-field linear-quadratic stochastic control on finite horizons.

Subpackages solve the differential/algebraic Riccati pair (`riccati`),
the static steady-state optimization (`static_opt`), Monte Carlo
simulation of the closed loop and its stationary turnpike (`simulate`),
and exponential-turnpike diagnostics (`analysis`); `model` holds the
problem data and assumption checks and `cli` the experiment driver.
"""

from .errors import AssumptionViolation, MflqError, NumericalFailure
from .model import (
    Dimensions,
    HatCoefficients,
    MapEvaluation,
    ProblemData,
    assemble_hats,
    check_mean_system_stabilizability,
    check_ms_stability,
    evaluate_maps,
    make_problem,
    normalize_cross_terms,
    problem_from_dict,
    problem_from_json,
    validate_assumption_a1,
)
from .riccati import (
    ArePair,
    RiccatiPath,
    convergence_profile,
    horizon_monotonicity_check,
    integrate_finite_horizon,
    integrate_offsets,
    solve_are,
)
from .static_opt import StaticSolution, evaluate_F, kkt_residual, solve_static
from .simulate import (
    EnsembleStats,
    RawPaths,
    SimulationConfig,
    brownian_increments,
    build_adjoint_paths,
    estimate_cost,
    propagate_mean,
    read_raw_paths,
    write_raw_paths,
    run_coupled,
    simulate_optimal_ensemble,
    simulate_turnpike_ensemble,
)
from .analysis import (
    DecayFit,
    block_psd_check,
    fit_turnpike_decay,
    integral_turnpike,
    lemma_suite,
    matrix_contraction_check,
    turnpike_report,
    value_convergence,
)

__version__ = "0.1.0"
