"""Exception hierarchy. exit_code maps to the CLI process exit code."""


class RLPruneError(Exception):
    exit_code = 1


class ConfigError(RLPruneError):
    """Bad hyperparameter, flag or config-file value."""
    exit_code = 2


class DataError(RLPruneError):
    """Bad dataset / model file / input payload."""
    exit_code = 3


class ShapeError(DataError):
    """Tensor shape incompatible with a layer."""
    exit_code = 3


class NumericError(RLPruneError):
    """NaN/Inf escaped a layer, or training diverged."""
    exit_code = 4


class StateError(RLPruneError):
    """API called out of order (e.g. backward before forward)."""
    exit_code = 1


class ValidationError(DataError):
    """Model graph failed structural validation."""
    exit_code = 3


class BudgetUnplaceable(RLPruneError):
    """Every coupled group is saturated; the step budget cannot be placed."""
    exit_code = 1
