"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and the process exit
status the CLI should use when it escapes to the top level.
"""


class NonprobError(Exception):
    code = "ERROR"
    exit_status = 1


class ConfigError(NonprobError):
    code = "CONFIG_ERROR"
    exit_status = 2


class DataError(NonprobError):
    code = "DATA_ERROR"
    exit_status = 3


class EstimationError(NonprobError):
    code = "ESTIMATION_ERROR"
    exit_status = 4


class ResamplingError(NonprobError):
    code = "RESAMPLING_ERROR"
    exit_status = 5


# data model
class InvalidSchemaError(DataError):
    code = "INVALID_SCHEMA"


class UnknownLevelError(DataError):
    code = "UNKNOWN_LEVEL"

    def __init__(self, variable, value, where=""):
        self.variable = variable
        self.value = value
        msg = f"unknown level {value!r} for variable {variable!r}"
        super().__init__(f"{msg} ({where})" if where else msg)


class SchemaMismatchError(DataError):
    code = "SCHEMA_MISMATCH"

    def __init__(self, variables, msg=None):
        self.variables = list(variables)
        super().__init__(msg or f"covariate schemas differ in: {', '.join(self.variables)}")


class EmptyPopulationError(DataError):
    code = "EMPTY_POPULATION"


class NoTargetError(DataError):
    code = "NO_TARGET"


class ParseError(DataError):
    code = "PARSE_ERROR"

    def __init__(self, path, line, msg):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {msg}")


# model fitting
class SingularDesignError(EstimationError):
    code = "SINGULAR_DESIGN"

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(self.columns)}")


class SeparationError(EstimationError):
    code = "SEPARATION"


class DegenerateOutcomeError(EstimationError):
    code = "DEGENERATE_OUTCOME"


class DesignMismatchError(EstimationError):
    code = "DESIGN_MISMATCH"


# estimators
class InfeasibleMarginsError(EstimationError):
    code = "INFEASIBLE_MARGINS"


class ConvergenceError(EstimationError):
    code = "NO_CONVERGENCE"

    def __init__(self, msg, final_error=None):
        self.final_error = final_error
        super().__init__(msg)


class TrimInfeasibleError(EstimationError):
    code = "TRIM_INFEASIBLE"


class UnstablePropensityError(EstimationError):
    code = "UNSTABLE_PROPENSITY"


class BetweenCellVarianceError(EstimationError):
    code = "BETWEEN_CELL_VARIANCE_UNDEFINED"


class InsufficientDonorsError(EstimationError):
    code = "INSUFFICIENT_DONORS"


class SampleSizeError(EstimationError):
    code = "SAMPLE_SIZE"


class WeightError(EstimationError):
    code = "INVALID_WEIGHTS"


class EmptySampleError(EstimationError):
    code = "EMPTY_SAMPLE"


# resampling
class UnstableResamplingError(ResamplingError):
    code = "UNSTABLE_RESAMPLING"

    def __init__(self, msg, failures=0, total=0):
        self.failures = failures
        self.total = total
        super().__init__(msg)


class ReplicateFailure(ResamplingError):
    code = "REPLICATE_FAILED"

    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"replicate {index} failed: {cause}")
