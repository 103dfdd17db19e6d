"""Diagnostics for staggered-rollout cross-sectional research designs.

The package estimates treatment effects with absorbed fixed effects and
cluster-robust inference, quantifies what the design alone produces via
placebo randomization of the rollout schedule ("design effects"), and
decomposes outcomes over survey fieldwork time.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .data_model import (
    CpiSeries,
    ObservationTable,
    WeightPolicy,
    deflate,
    load_observations,
    reflate,
    trim_weights,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    CpiCoverageError,
    DegenerateSampleError,
    DesignFxError,
    EmptySupportError,
    PlaceboFailureError,
    RankDeficiencyError,
    SchemaError,
)
from .randomization import (
    DensityCurve,
    PlaceboDistribution,
    export_density,
    run_placebo,
    two_tailed_p,
)
from .regression import (
    FitResult,
    RegressionSpec,
    absorb_fe,
    cluster_vcov,
    drop_singletons,
    estimate_spec,
    wls_fit,
)
from .survey_time import (
    CohortComparison,
    TrendCurve,
    TrendFit,
    cohort_compare,
    kernel_smooth,
    linear_trend,
)
from .synthetic import DgpConfig, default_adoption_counts, generate
from .treatment import (
    Concordance,
    RolloutSchedule,
    TreatmentAssignment,
    assign_treatment,
    estimate_birth_year,
    resolve_rollout_year,
    scramble_schedule,
)

__all__ = [
    "RunConfig",
    "load_config",
    "CpiSeries",
    "ObservationTable",
    "WeightPolicy",
    "deflate",
    "load_observations",
    "reflate",
    "trim_weights",
    "ConfigError",
    "ConvergenceError",
    "CpiCoverageError",
    "DegenerateSampleError",
    "DesignFxError",
    "EmptySupportError",
    "PlaceboFailureError",
    "RankDeficiencyError",
    "SchemaError",
    "DensityCurve",
    "PlaceboDistribution",
    "export_density",
    "run_placebo",
    "two_tailed_p",
    "FitResult",
    "RegressionSpec",
    "absorb_fe",
    "cluster_vcov",
    "drop_singletons",
    "estimate_spec",
    "wls_fit",
    "CohortComparison",
    "TrendCurve",
    "TrendFit",
    "cohort_compare",
    "kernel_smooth",
    "linear_trend",
    "DgpConfig",
    "default_adoption_counts",
    "generate",
    "Concordance",
    "RolloutSchedule",
    "TreatmentAssignment",
    "assign_treatment",
    "estimate_birth_year",
    "resolve_rollout_year",
    "scramble_schedule",
    "__version__",
]
