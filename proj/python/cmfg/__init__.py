"""Constrained mean-field game solver.

Equilibrium search via a single optimization problem over flows and
multipliers, closed-form gap certificates, and Monte Carlo validation of the
mean-field approximation in finite-player games.
"""

from ._core import (
    BoundSet,
    CertifyReport,
    CmfomoCoeffs,
    DeviationGain,
    EnvironmentModel,
    EpisodeBatchStats,
    EpsNeCertificate,
    FeasibilityReport,
    GameDims,
    GapReport,
    MeanFieldFlow,
    NPlayerConfig,
    OccupationMeasure,
    Policy,
    RateRow,
    RateStudy,
    SolveConfig,
    SolveResult,
    TraceRow,
    ValidationError,
    __version__,
    bound_constants,
    builtin_sis,
    certify_from_policy,
    check_strict_feasibility,
    cost_lhs,
    deviation_gain,
    env_from_file,
    env_from_json,
    epsilon_ne_certificate,
    flow_from_policy,
    gaps,
    occupation_from_policy,
    policy_from_flow,
    rate_study,
    simulate,
    solve,
    solve_population,
    uniform_policy,
)

__all__ = [
    "BoundSet",
    "CertifyReport",
    "CmfomoCoeffs",
    "DeviationGain",
    "EnvironmentModel",
    "EpisodeBatchStats",
    "EpsNeCertificate",
    "FeasibilityReport",
    "GameDims",
    "GapReport",
    "MeanFieldFlow",
    "NPlayerConfig",
    "OccupationMeasure",
    "Policy",
    "RateRow",
    "RateStudy",
    "SolveConfig",
    "SolveResult",
    "TraceRow",
    "ValidationError",
    "__version__",
    "bound_constants",
    "builtin_sis",
    "certify_from_policy",
    "check_strict_feasibility",
    "cost_lhs",
    "deviation_gain",
    "env_from_file",
    "env_from_json",
    "epsilon_ne_certificate",
    "flow_from_policy",
    "gaps",
    "occupation_from_policy",
    "policy_from_flow",
    "rate_study",
    "simulate",
    "solve",
    "solve_population",
    "uniform_policy",
]
