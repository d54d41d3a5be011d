"""Exception types shared across the package."""


class MiracleError(Exception):
    """Base class for package errors."""


class ShapeError(MiracleError):
    """Tensor dimensions do not chain or match."""


class SchemaError(MiracleError):
    """Record or payload violates the clinical/radiomic schema."""


class IngestionError(MiracleError):
    """CSV inputs cannot be joined into a consistent dataset."""


class ConfigError(MiracleError):
    """Invalid configuration value."""


class EvaluationError(MiracleError):
    """Metrics requested on a degenerate (single-class) dataset."""


class TrainingError(MiracleError):
    """Optimization diverged or could not proceed."""


class GenerationError(MiracleError):
    """LLM remark generation returned an unusable completion."""


class RemoteError(MiracleError):
    """LLM endpoint unreachable after retries."""


class UnsupportedOperationError(MiracleError):
    """Operation not available under the active ablation mode."""


class CheckpointError(MiracleError):
    """Checkpoint could not be read or written."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint carries an unknown format version."""


class CheckpointIntegrityError(CheckpointError):
    """Checkpoint bytes fail the integrity checksum."""
