class FedRepError(Exception):
    """Base class for domain-specific errors."""

    pass


class FieldConflict(ValueError):
    """
    Raised by model validators when a constraint ties several fields together.
    `fields` names them so the error can be reported against each dotted key.
    """

    def __init__(self, message: str, fields: tuple[str, ...]):
        self.fields = fields
        super().__init__(message)


class DataLoadError(FedRepError):
    """Raised when a dataset file cannot be read or is malformed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f" ({path}" + (f", line {line}" if line is not None else "") + ")"
        super().__init__(message + location)


class CoercionError(FedRepError):
    """Raised when a cell (usually a label) cannot be converted to a number."""

    pass


class ImputationError(FedRepError):
    """Raised when a feature has no observed value to take a median from."""

    pass


class FeatureSelectionError(FedRepError):
    """Raised when constant-feature removal leaves nothing to train on."""

    pass


class NormalizationError(FedRepError):
    """Raised when standardization would divide by a zero deviation."""

    pass


class PartitionError(FedRepError):
    """Raised when samples cannot be split across the requested clients."""

    pass


class ModelShapeError(FedRepError):
    """Raised when parameters and data disagree on dimensionality."""

    pass


class AggregationError(FedRepError):
    """Raised when an aggregation rule's preconditions are not met."""

    pass


class AggregatorConfigError(AggregationError):
    """Raised when a rule is missing a required setting."""

    pass


class UnknownRuleError(AggregationError):
    """Raised when an aggregation rule name is not registered."""

    pass


class ReputationError(FedRepError):
    """Raised when a reputation update references an unknown client."""

    pass


class StatisticsError(FedRepError):
    """Raised when a metric or test statistic is undefined for its input."""

    pass


class ConfigError(FedRepError):
    """Raised when a scenario configuration is invalid. Carries the dotted keys."""

    def __init__(self, message: str, keys: list[str] | None = None):
        self.keys = keys or []
        super().__init__(message)


class ResultsWriteError(FedRepError):
    """Raised when result files cannot be written."""

    def __init__(self, message: str, path: str):
        self.path = path
        super().__init__(f"{message} ({path})")


class ExperimentError(FedRepError):
    """Raised when an experiment request is inconsistent (e.g. duplicate rules)."""

    pass
