from typing import Any, Optional


class SubsamplingError(Exception):
    """Base error carrying the component that raised it and an error type."""

    component: str = "glm_subsampling"
    error_type: str = "numerical"
    exit_code: int = 4

    def __init__(self, message: str, component: Optional[str] = None, error_type: Optional[str] = None):
        self.message = message
        self.component = component or self.component
        self.error_type = error_type or self.error_type
        super().__init__(f"{self.component} error ({self.error_type}): {message}")


class ConfigError(SubsamplingError):
    component = "config"
    error_type = "config"
    exit_code = 2


class DataError(SubsamplingError):
    component = "data"
    error_type = "data"
    exit_code = 3


# glm_core

class NonFiniteLinearPredictor(SubsamplingError):
    component = "glm_core"
    error_type = "overflow"


class MissingResponses(DataError):
    component = "glm_core"
    error_type = "missing_responses"

    def __init__(self, message: str, rows: Any = None):
        self.rows = [] if rows is None else [int(row) for row in rows]
        super().__init__(message)


class ShapeMismatch(SubsamplingError):
    component = "glm_core"
    error_type = "shape"


class EmptyInput(SubsamplingError):
    component = "metrics"
    error_type = "empty"


# solver

class SingularHessian(SubsamplingError):
    component = "solver"
    error_type = "singular"


class NotConverged(SubsamplingError):
    component = "solver"
    error_type = "not_converged"

    def __init__(self, message: str, result: Any = None):
        self.result = result
        super().__init__(message)


class SeparationSuspected(SubsamplingError):
    component = "solver"
    error_type = "separation"


class TooFewRows(DataError):
    component = "solver"
    error_type = "too_few_rows"


# sampling

class PilotTooLarge(SubsamplingError):
    component = "sampling"
    error_type = "pilot_size"


class DegenerateMarginal(SubsamplingError):
    component = "sampling"
    error_type = "degenerate_marginal"


class PilotSingular(SubsamplingError):
    component = "sampling"
    error_type = "singular"


class SingularPhi(SubsamplingError):
    component = "sampling"
    error_type = "singular"


class ZeroWeights(SubsamplingError):
    component = "sampling"
    error_type = "zero_weights"


# estimators

class SingularGram(SubsamplingError):
    component = "estimators"
    error_type = "singular"


class SingularGammaHat(SubsamplingError):
    component = "estimators"
    error_type = "singular"


# simulation

class SingularMatrix(SubsamplingError):
    component = "simulation"
    error_type = "singular"


class ZeroProbability(SubsamplingError):
    component = "simulation"
    error_type = "zero_probability"


class DivisionByZero(SubsamplingError):
    component = "simulation"
    error_type = "division_by_zero"


# config / io

class ParseError(ConfigError):
    error_type = "parse"

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key is not None:
            location.append(f"key '{key}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class ValidationError(ConfigError):
    error_type = "validation"

    def __init__(self, violations: list):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class MalformedCsv(DataError):
    error_type = "malformed_csv"


class NonNumericField(DataError):
    error_type = "non_numeric"


class ConstantColumn(DataError):
    error_type = "constant_column"


class MissingColumn(DataError):
    error_type = "missing_column"
