class TddcsiError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(TddcsiError, ValueError):
    """Invalid or unknown configuration value."""


class FormatError(TddcsiError, ValueError):
    """A model, dataset or sidecar file failed to parse."""


class TrainingDiverged(TddcsiError, RuntimeError):
    """Loss became non-finite during training; ``log`` holds the epochs so far."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = list(log or [])
