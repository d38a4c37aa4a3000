"""Exception hierarchy. Each family maps onto a CLI exit code."""


class TextInpaintError(Exception):
    exit_code = 1


class ConfigError(TextInpaintError, ValueError):
    exit_code = 2


class DataError(TextInpaintError):
    exit_code = 3


class ShapeError(DataError, ValueError):
    pass


class TimestepError(DataError, IndexError):
    pass


class InvalidScheduleError(ConfigError):
    pass


class InvalidAnnotationError(DataError, ValueError):
    pass


class VocabularyError(DataError, ValueError):
    pass


class CompatibilityError(DataError):
    pass


class ManifestParseError(DataError):
    def __init__(self, message, line_number=None):
        super().__init__(message if line_number is None else f"line {line_number}: {message}")
        self.line_number = line_number


class NumericalDivergenceError(TextInpaintError, ArithmeticError):
    exit_code = 4
