"""Exception hierarchy shared across the package."""


class LepdeError(Exception):
    """Base class for all package errors."""


class SolverError(LepdeError):
    pass


class SolverInstabilityError(SolverError):
    """Raised when a simulation produces non-finite values."""


class BoundaryGeometryError(SolverError):
    """Invalid boundary parameterization (overlapping or out-of-range voids)."""


class DataFormatError(LepdeError):
    pass


class DatasetVersionError(DataFormatError):
    """meta.json carries an incompatible format_version."""


class DatasetSchemaError(DataFormatError):
    """Trajectory does not conform to the dataset's grid/channel schema."""


class DatasetPayloadError(DataFormatError):
    """Binary payload is truncated or otherwise inconsistent with the schema."""


class CheckpointError(LepdeError):
    pass


class CheckpointConfigError(CheckpointError):
    """Checkpoint config hash does not match the expected model config."""


class TrainingDivergedError(LepdeError):
    """Non-finite loss or gradient encountered during optimization."""


class ConfigError(LepdeError):
    """CLI/run configuration failed schema validation."""
