"""Exception hierarchy shared across pipeline stages."""


class FleetCensusError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FleetCensusError):
    """A value violates a domain invariant (non-positive mass, bad label...)."""


class RegistryError(FleetCensusError):
    """Problem with the make/model registry file or its contents."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownModelError(FleetCensusError):
    """(make, model) pair is not present in the registry."""


class PlanError(FleetCensusError):
    """Query plan cannot be built as requested."""


class FetchError(FleetCensusError):
    """Transient source failure; retried by the fetcher."""


class SourceRefusedError(FleetCensusError):
    """Source refused the request (quota, robots, deny list); not retried."""


class CurationError(FleetCensusError):
    """Per-image curation failure that is not a recorded rejection."""


class ManifestError(FleetCensusError):
    """Dataset manifest is malformed or an operation on it is invalid."""


class BalanceError(FleetCensusError):
    """Class balancing cannot proceed (e.g. an empty class)."""


class SplitError(FleetCensusError):
    """Train/test split parameters leave a class without test entries."""


class FormatError(FleetCensusError):
    """A binary artifact (feature store, head checkpoint) is malformed."""


class ShapeError(FleetCensusError):
    """Array dimensions do not match the model or store contract."""


class TrainingError(FleetCensusError):
    """Training cannot start (empty split, invalid config)."""


class TrainingDivergedError(TrainingError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, batch, loss):
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}; "
            "reduce the learning rate or check the feature store for outliers"
        )
        self.epoch = epoch
        self.batch = batch


class EvaluationError(FleetCensusError):
    """Evaluation inputs are inconsistent (e.g. missing feature rows)."""


class ConfigError(FleetCensusError):
    """Pipeline configuration is invalid. Carries every problem found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class DependencyError(FleetCensusError):
    """A stage's required upstream artifact is missing."""


class StageError(FleetCensusError):
    """A pipeline stage failed while running."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
