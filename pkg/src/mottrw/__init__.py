"""Biased Mott variable-range hopping on a one-dimensional random environment.

Simulation and numerical-verification toolkit: random marked environments on the
line, truncated long-range jump laws, effective conductances, regeneration-based
speed estimators, environment-seen-from-the-walker diagnostics, and analytic
ballisticity criteria, all tied together by the ``mottrw`` command line tool.
"""

from .environments import (
    Environment,
    EnvironmentSpec,
    MarkLaw,
    build_environment,
    extend_window,
    sample_heavy_tail_gap,
    shift_environment,
)
from .criteria import (
    AnalyticClassification,
    NnCriterionResult,
    PhasePoint,
    PhaseSweepResult,
    classify_analytic,
    critical_bias,
    nn_criterion,
    operational_subballistic,
    phase_sweep,
)
from .evm import (
    DensityDiagnostics,
    OccupationFunctional,
    VelocityRepresentations,
    density_envelope,
    density_envelope_profile,
    density_ratio_profile,
    occupation_average,
    standard_cylinder_observables,
    velocity_representations,
)
from .kernel import (
    JumpLaw,
    PotentialSpec,
    WalkConfig,
    conductance,
    jump_distribution,
    jump_rate,
    range_cutoff,
    site_weight,
)
from .network import (
    crossing_distribution,
    effective_conductance,
    escape_probability,
    exit_probabilities,
    nn_conductance_to_infinity,
    resistance_partial_sums,
)
from .regen import (
    DominationTrace,
    RegenerativeRun,
    SpeedBoundTrace,
    exact_hit_bound,
    overshoot_domination_run,
    overshoot_dominator,
    regeneration_speed,
    simulate_regenerative,
    speed_bound_trace,
)
from .walk import (
    HittingResult,
    TrajectoryStats,
    VelocityEstimate,
    hitting_overshoot,
    simulate_continuous,
    simulate_discrete,
    velocity_estimate,
    visit_counts,
)

__all__ = [
    "Environment",
    "EnvironmentSpec",
    "MarkLaw",
    "build_environment",
    "extend_window",
    "sample_heavy_tail_gap",
    "shift_environment",
    "AnalyticClassification",
    "NnCriterionResult",
    "PhasePoint",
    "PhaseSweepResult",
    "classify_analytic",
    "critical_bias",
    "nn_criterion",
    "operational_subballistic",
    "phase_sweep",
    "DensityDiagnostics",
    "OccupationFunctional",
    "VelocityRepresentations",
    "density_envelope",
    "density_envelope_profile",
    "density_ratio_profile",
    "occupation_average",
    "standard_cylinder_observables",
    "velocity_representations",
    "JumpLaw",
    "PotentialSpec",
    "WalkConfig",
    "conductance",
    "jump_distribution",
    "jump_rate",
    "range_cutoff",
    "site_weight",
    "crossing_distribution",
    "effective_conductance",
    "escape_probability",
    "exit_probabilities",
    "nn_conductance_to_infinity",
    "resistance_partial_sums",
    "DominationTrace",
    "RegenerativeRun",
    "SpeedBoundTrace",
    "exact_hit_bound",
    "overshoot_domination_run",
    "overshoot_dominator",
    "regeneration_speed",
    "simulate_regenerative",
    "speed_bound_trace",
    "HittingResult",
    "TrajectoryStats",
    "VelocityEstimate",
    "hitting_overshoot",
    "simulate_continuous",
    "simulate_discrete",
    "velocity_estimate",
    "visit_counts",
]

__version__ = "0.1.0"
