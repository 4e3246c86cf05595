"""Package-wide exception types, each mapped to a distinct CLI exit code."""


class SeglowError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(SeglowError):
    """Malformed or inconsistent runtime input (shapes, values, missing files)."""

    exit_code = 3


class ConfigurationError(SeglowError):
    """Invalid configuration: unknown keys, out-of-range settings, wiring mismatches."""

    exit_code = 4


class DataFormatError(SeglowError):
    """Corrupt, truncated, or version-mismatched dataset files."""

    exit_code = 5


class TrainingAbort(SeglowError):
    """Training stopped because a loss component became non-finite."""

    exit_code = 6

    def __init__(self, component, step, value=None):
        self.component = component
        self.step = step
        self.value = value
        msg = f"non-finite loss component '{component}' at step {step}"
        if value is not None:
            msg += f" (value: {value})"
        super().__init__(msg)


class NoCandidatesError(SeglowError):
    """Every segment eroded to empty: no fake patch candidates this step."""

    exit_code = 3
