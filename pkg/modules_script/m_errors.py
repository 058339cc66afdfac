from typing import Optional


# Exit codes returned by main.py for each error family
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
EXIT_NUMERIC_ERROR = 4


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


class DataError(ValueError):
    """Malformed, missing or insufficient data."""


class ParseError(DataError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class CapacityError(DataError):
    def __init__(self, side: str, needed: int, available: int):
        self.side = side
        self.needed = needed
        self.available = available
        super().__init__(f"Not enough {side} samples: need {needed}, have {available}")


class CapabilityError(DataError):
    """The adversary lacks the information (labels) the requested feature needs."""


class StageDependencyError(DataError):
    """An upstream CLI stage has not produced the file this stage consumes."""


class TraceFormatError(DataError):
    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ShapeError(DataError):
    """Input shape does not match the layer or NetworkSpec."""


class NumericError(ArithmeticError):
    def __init__(self, message: str, layer_index: Optional[int] = None):
        self.layer_index = layer_index
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)


class StateError(RuntimeError):
    """Operation called in the wrong order (e.g. backward without forward)."""


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG_ERROR
    if isinstance(error, NumericError):
        return EXIT_NUMERIC_ERROR
    if isinstance(error, (DataError, FileNotFoundError)):
        return EXIT_DATA_ERROR
    return EXIT_UNEXPECTED
