"""Stationary equilibria of income-fluctuation models with recursive utility."""
from .asymptotics import (
    BoundaryLayer,
    FarFieldExpansion,
    FitFailure,
    WindowTooSmall,
    boundary_layer,
    far_field_expansion,
    far_field_saving,
    nonexistence_ratio,
    validate_far_field,
)
from .equilibrium import (
    CapitalSupply,
    EquilibriumOptions,
    EquilibriumResult,
    MultipleEquilibria,
    NoBracket,
    blowup_diagnostic,
    capital_demand,
    capital_supply,
    existence_condition,
    implied_rate,
    solve_equilibrium,
)
from .fpk_solver import (
    NegativeDensity,
    NoCrossing,
    SingularSolve,
    StationaryMeasure,
    adjoint_measure,
    aggregate_capital,
    aggregate_labor,
    cdf_distance,
    closed_form_measure,
    dirac_measure,
    find_xhat,
)
from .hjb_solver import (
    BadGrid,
    Grid,
    HjbOptions,
    HjbSolution,
    NoConvergence,
    assert_qualitative,
    boundary_saving_classifier,
    build_grid,
    solve_hjb,
)
from .mc_simulator import ConfigError, EmpiricalMeasure, SimConfig, compare, simulate
from .model_core import (
    AssumptionViolation,
    DomainError,
    ModelParams,
    PermissiveModeWarning,
    ProductionParams,
    validate,
)

__version__ = "0.1.0"
