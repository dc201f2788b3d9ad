"""Exception and warning types shared across the package."""

from __future__ import annotations


class SynthPanelError(Exception):
    """Base class for all errors raised by this package."""


# --- panel ingestion / validation ---------------------------------------


class PanelError(SynthPanelError):
    """Base class for dataset construction and validation errors."""


class MissingCell(PanelError):
    """A (region, year) observation required for balance is absent."""


class NonFinite(PanelError):
    """A numeric field contains NaN or infinity."""


class InconsistentCovariate(PanelError):
    """A per-region constant attribute varies across that region's rows."""


class DuplicateRow(PanelError):
    """The same (region, year) appears more than once."""


class NoPrePeriod(PanelError):
    """Treatment year leaves fewer than the minimum pre-treatment years."""


class NoPostPeriod(PanelError):
    """Treatment year leaves no post-treatment years."""


class EmptyDonorPool(PanelError):
    """Fewer than two never-treated regions are available."""


# --- regression ----------------------------------------------------------


class RankDeficient(SynthPanelError):
    """Too few observations to fit even an intercept-only cross-section."""


class YearMismatch(SynthPanelError):
    """Two series that must share a year range do not."""


class EmptyInput(SynthPanelError):
    """An aggregation was given nothing to aggregate."""


# --- sampling ------------------------------------------------------------


class NonPositiveScale(SynthPanelError):
    """Observation scale for a location likelihood must be positive."""


class NonFiniteInit(SynthPanelError):
    """Chain initial state is not finite or has non-finite log density."""


class DegenerateTarget(SynthPanelError):
    """Target log density is -inf at the initial state."""


# --- trend filter --------------------------------------------------------


class TooShort(SynthPanelError):
    """Series has fewer than three observations."""


class NegativePhi(SynthPanelError):
    """Smoothing penalty must be non-negative."""


# --- synthetic control ---------------------------------------------------


class SynthError(SynthPanelError):
    """Base class for synthetic-control fit errors."""


class NumericalFailure(SynthError):
    """Optimizer failed to reach the required stationarity residual."""


class InsufficientDonors(SynthError):
    """Donor pool too small to pose the weight problem."""


class UnknownPredictor(SynthError):
    """A requested predictor name is not available in the dataset."""


# --- inference -----------------------------------------------------------


class TooFewPlacebos(SynthPanelError):
    """Not enough placebo series to form the requested bounds."""


class TooFewObservations(SynthPanelError):
    """A statistical test was given fewer than two points per group."""


class SingularDesign(SynthPanelError):
    """Regression design has no variation in the effect regressor."""


class DegenerateVariance(SynthPanelError):
    """A variable required to vary is constant across regions."""


# --- simulation / configuration ------------------------------------------


class ConfigError(SynthPanelError):
    """A configuration value is missing, malformed, or out of range."""


class MissingArtifact(SynthPanelError):
    """A pipeline stage needs an output file an earlier stage never wrote."""


# --- warnings ------------------------------------------------------------


class DonorHullWarning(UserWarning):
    """Pre-period fit RMSE exceeded the configured threshold."""


class SmallDonorPoolWarning(UserWarning):
    """Placebo inference is running with a donor pool below five."""


class DegenerateWeightsWarning(UserWarning):
    """Placebo weights were degenerate; fell back to uniform weighting."""


class PlaceboFitWarning(UserWarning):
    """A placebo fit failed and was excluded from the inference set."""
