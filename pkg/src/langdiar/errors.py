class LangDiarError(Exception):
    """Base class for toolkit errors."""


class ConfigError(LangDiarError, ValueError):
    """Invalid configuration or parameters."""


class DataError(LangDiarError, ValueError):
    """Input data that violates a contract (too short, malformed, ...)."""


class FormatError(DataError):
    """Malformed file content. ``location`` names the line or byte offset."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class TooShortError(DataError):
    def __init__(self, message, available, required):
        self.available = available
        self.required = required
        super().__init__(f"{message} (have {available}, need {required})")
