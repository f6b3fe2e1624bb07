"""Domain errors shared across the pipeline."""


class PathrankError(Exception):
    """Base exception for pipeline failures; `code` is the machine-readable kind."""

    code = "pathrank"


class GenerationError(PathrankError):
    """Raised when a synthetic environment cannot be generated."""

    code = "generation"


class UnreachableError(PathrankError):
    """Raised when no path connects two nodes."""

    code = "unreachable"


class TruncationError(PathrankError):
    """Raised when an input exceeds a configured sequence bound."""

    code = "truncation"


class InsufficientCandidatesError(PathrankError):
    """Raised when a candidate set cannot supply one positive and three negatives."""

    code = "insufficient-candidates"


class TrainingDivergedError(PathrankError):
    """Raised when a training loss becomes NaN or infinite."""

    code = "diverged"

    def __init__(self, stage: str, step: int, detail: str) -> None:
        """Record where training stopped."""
        self.stage = stage
        self.step = step
        super().__init__(f"stage {stage} step {step}: {detail}")


class ArtifactMismatchError(PathrankError):
    """Raised when artifacts were produced from incompatible configs."""

    code = "artifact-mismatch"


class ArtifactFormatError(PathrankError):
    """Raised when an artifact file does not follow its declared format."""

    code = "artifact-format"


class InvalidTrajectoryError(PathrankError):
    """Raised when consecutive trajectory nodes are not graph-adjacent."""

    code = "invalid-trajectory"
