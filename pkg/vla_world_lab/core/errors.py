class VlaWorldError(Exception):
    """Base error; `exit_code` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(VlaWorldError):
    exit_code = 2

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DataIOError(VlaWorldError):
    exit_code = 3


class DatasetFormatError(DataIOError):
    """Malformed dataset or log file; carries the 1-based failing line."""

    def __init__(self, path: str, line: int, reason: str):
        self.path = path
        self.line = line
        self.reason = reason
        super().__init__(f"{path}: line {line}: {reason}")


class CheckpointError(DataIOError):
    pass


class NumericalError(VlaWorldError):
    exit_code = 4


class PreconditionError(ValueError):
    pass


class TokenSequenceError(ValueError):
    pass


class GenerationError(DataIOError):
    """Scenario generator ran out of attempts; carries the last rejection reasons."""

    def __init__(self, index: int, attempts: int, reasons: list):
        self.index = index
        self.reasons = reasons
        super().__init__(f"scene {index}: no valid scenario after {attempts} attempts ({'; '.join(reasons[-3:])})")


class DatasetContentError(DataIOError):
    """Records that parse but break a precondition of the stage reading them."""
