"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, FormatError -> 3,
TrainingDivergedError -> 4.
"""


class RffidError(Exception):
    """Base class for all package errors."""


class ConfigError(RffidError):
    """Invalid configuration, scenario, or shape mismatch between artifacts."""


class InputError(RffidError):
    """Operation called on degenerate input (too short, empty, all-zero, ...)."""


class FormatError(RffidError):
    """Corrupt or inconsistent binary artifact."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDivergedError(RffidError):
    """Loss became NaN/Inf during an update loop."""

    def __init__(self, epoch: int, learning_rate: float):
        super().__init__(
            f"training diverged at epoch {epoch} (learning_rate={learning_rate});"
            " reduce the learning rate"
        )
        self.epoch = epoch
        self.learning_rate = learning_rate
