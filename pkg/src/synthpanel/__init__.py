"""Panel-data causal inference with synthetic counterfactuals.

The package turns a long-form regional panel into treatment-effect
estimates in five composable steps: cross-sectional residualization
against geography, posterior smoothing of the residuals, trend
extraction, convex-weight counterfactual fitting, and placebo
permutation inference.  Each step is importable on its own; the
``synthpanel`` command chains them over a run directory.
"""

from .errors import (
    ConfigError,
    DegenerateTarget,
    DegenerateVariance,
    DegenerateWeightsWarning,
    DonorHullWarning,
    DuplicateRow,
    EmptyDonorPool,
    EmptyInput,
    InconsistentCovariate,
    InsufficientDonors,
    MissingArtifact,
    MissingCell,
    NegativePhi,
    NonFinite,
    NonFiniteInit,
    NoPostPeriod,
    NoPrePeriod,
    NonPositiveScale,
    NumericalFailure,
    PanelError,
    PlaceboFitWarning,
    RankDeficient,
    SingularDesign,
    SmallDonorPoolWarning,
    SynthError,
    SynthPanelError,
    TooFewObservations,
    TooFewPlacebos,
    TooShort,
    UnknownPredictor,
    YearMismatch,
)
from .hpfilter import (
    ANNUAL_PHI,
    QUARTERLY_PHI,
    TrendResult,
    annual_phi,
    hp_filter,
    phi_for_frequency_ratio,
)
from .io import (
    gap_from_record,
    gap_record,
    read_json,
    render_balance_table,
    render_did_table,
    render_equality_table,
    synth_record,
    write_average_path_csv,
    write_csv,
    write_inference_artifacts,
    write_json,
    write_panel_csv,
    write_synth_artifacts,
    write_truth,
)
from .inference import (
    DidResult,
    EqualityTestResult,
    FitDiagnostics,
    MechanismEffect,
    MechanismScreen,
    PlaceboInference,
    average_gap_series,
    exact_p,
    group_equality,
    invert_bounds,
    kolmogorov_pvalue,
    ks_statistic,
    mechanism_screen,
    per_period_p,
    placebo_did,
    placebo_run,
    weighted_p,
)
from .keys import substream
from .mcmc import (
    ChainResult,
    PosteriorSummary,
    SamplerConfig,
    SmoothResult,
    TargetDensity,
    ess,
    jeffreys_target,
    mh_chain,
    planned_iterations,
    smooth_panel,
)
from .panel import (
    DEFAULT_OUTCOMES,
    GEO_NUMERIC_FIELDS,
    ColumnSchema,
    GapSeries,
    GeoCovariates,
    PanelDataset,
    RegionId,
    TreatmentSummary,
    ingest_panel,
    validate_treatment,
)
from .residualize import (
    QualitySeries,
    ResidualModel,
    ResidualSeries,
    climate_dummy_levels,
    design_matrix,
    fit_cross_section,
    recompose,
    residualize,
)
from .simplexqp import SimplexSolution, least_squares_weights, solve_simplex_qp
from .simulate import (
    CLIMATE_ZONES,
    DgpConfig,
    GroundTruth,
    constant_effect,
    generate,
)
from .synth import (
    AveragePath,
    DonorFrequency,
    DonorWeights,
    PredictorSpec,
    PredictorWeights,
    SynthProblem,
    SynthSolution,
    average_treatment_path,
    build_problem,
    default_lag_years,
    donor_frequency,
    fit_synth,
    solve_v,
    solve_w_given_v,
    split_pre_period,
)

__version__ = "0.1.0"

__all__ = [
    "annual_phi",
    "average_gap_series",
    "average_treatment_path",
    "build_problem",
    "climate_dummy_levels",
    "constant_effect",
    "default_lag_years",
    "design_matrix",
    "donor_frequency",
    "ess",
    "exact_p",
    "fit_cross_section",
    "fit_synth",
    "gap_from_record",
    "gap_record",
    "generate",
    "group_equality",
    "hp_filter",
    "ingest_panel",
    "invert_bounds",
    "jeffreys_target",
    "kolmogorov_pvalue",
    "ks_statistic",
    "least_squares_weights",
    "mechanism_screen",
    "mh_chain",
    "per_period_p",
    "phi_for_frequency_ratio",
    "placebo_did",
    "placebo_run",
    "planned_iterations",
    "read_json",
    "recompose",
    "render_balance_table",
    "render_did_table",
    "render_equality_table",
    "residualize",
    "smooth_panel",
    "solve_simplex_qp",
    "solve_v",
    "solve_w_given_v",
    "split_pre_period",
    "substream",
    "synth_record",
    "validate_treatment",
    "weighted_p",
    "write_average_path_csv",
    "write_csv",
    "write_inference_artifacts",
    "write_json",
    "write_panel_csv",
    "write_synth_artifacts",
    "write_truth",
    "AveragePath",
    "ANNUAL_PHI",
    "ChainResult",
    "ColumnSchema",
    "ConfigError",
    "CLIMATE_ZONES",
    "DegenerateTarget",
    "DegenerateVariance",
    "DegenerateWeightsWarning",
    "DgpConfig",
    "DidResult",
    "DonorFrequency",
    "DonorHullWarning",
    "DonorWeights",
    "DuplicateRow",
    "DEFAULT_OUTCOMES",
    "EmptyDonorPool",
    "EmptyInput",
    "EqualityTestResult",
    "FitDiagnostics",
    "GapSeries",
    "GeoCovariates",
    "GroundTruth",
    "GEO_NUMERIC_FIELDS",
    "InconsistentCovariate",
    "InsufficientDonors",
    "MechanismEffect",
    "MechanismScreen",
    "MissingArtifact",
    "MissingCell",
    "NegativePhi",
    "NonFinite",
    "NonFiniteInit",
    "NonPositiveScale",
    "NoPostPeriod",
    "NoPrePeriod",
    "NumericalFailure",
    "PanelDataset",
    "PanelError",
    "PlaceboFitWarning",
    "PlaceboInference",
    "PosteriorSummary",
    "PredictorSpec",
    "PredictorWeights",
    "QualitySeries",
    "QUARTERLY_PHI",
    "RankDeficient",
    "RegionId",
    "ResidualModel",
    "ResidualSeries",
    "SamplerConfig",
    "SimplexSolution",
    "SingularDesign",
    "SmallDonorPoolWarning",
    "SmoothResult",
    "SynthError",
    "SynthPanelError",
    "SynthProblem",
    "SynthSolution",
    "TargetDensity",
    "TooFewObservations",
    "TooFewPlacebos",
    "TooShort",
    "TreatmentSummary",
    "TrendResult",
    "UnknownPredictor",
    "YearMismatch",
]
