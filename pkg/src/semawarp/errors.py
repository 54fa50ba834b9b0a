"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` so the HTTP service
can surface precondition violations in a structured body.
"""


class SemawarpError(Exception):
    code = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class ShapeMismatch(SemawarpError):
    code = "shape_mismatch"


class InvalidLabel(SemawarpError):
    code = "invalid_label"


class DegenerateGeometry(SemawarpError):
    code = "degenerate_geometry"


class DimensionMismatch(SemawarpError):
    code = "dimension_mismatch"


class FingerprintMismatch(SemawarpError):
    code = "fingerprint_mismatch"


class EmptyInput(SemawarpError):
    code = "empty_input"


class NonFiniteValue(SemawarpError):
    code = "non_finite_value"


class TrainingDiverged(SemawarpError):
    """Raised when a training loss turns non-finite.

    ``last_good`` holds the most recent finite-loss checkpoint payload so
    callers can persist it instead of the poisoned state.
    """

    code = "training_diverged"

    def __init__(self, message, last_good=None, **details):
        super().__init__(message, **details)
        self.last_good = last_good


class ConfigError(SemawarpError):
    code = "config_error"
