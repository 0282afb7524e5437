"""Exception hierarchy for SpinCast"""


class SpincastError(Exception):
    """Base class for all SpinCast errors"""


class DomainError(SpincastError, ValueError):
    """Precondition or physical-domain violation in a compute module"""


class ConfigError(SpincastError, ValueError):
    """Configuration parse or validation failure"""

    def __init__(self, message, key=None, line=None, column=None):
        self.key = key
        self.line = line
        self.column = column
        location = []
        if key:
            location.append(f"key '{key}'")
        if line is not None:
            location.append(f"line {line}, column {column}")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")
        self.message = message


class ResultFileError(SpincastError, ValueError):
    """Malformed result file"""

    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class FitError(SpincastError, RuntimeError):
    """Fit could not be set up (bad model, shapes or initial parameters)"""
