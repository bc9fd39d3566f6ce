"""Exception hierarchy shared across the package.

Every error carries a stable ``code`` string so the command line can report
failures in a machine-readable way.
"""


class AnyClassError(Exception):
    code = "E_GENERIC"


class InvalidInputError(AnyClassError, ValueError):
    code = "E_INVALID_INPUT"


class InvalidConfigError(AnyClassError, ValueError):
    code = "E_INVALID_CONFIG"


class ZeroCountError(InvalidConfigError):
    """A balancing weight was requested for a category with no instances."""

    code = "E_ZERO_COUNT"

    def __init__(self, message, category=None):
        super().__init__(message)
        self.category = category


class UndefinedMetricError(AnyClassError, ValueError):
    code = "E_UNDEFINED_METRIC"


class ParseError(InvalidInputError):
    code = "E_PARSE"

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class TrainingDivergedError(AnyClassError, RuntimeError):
    code = "E_DIVERGED"

    def __init__(self, epoch, batch, max_logit):
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch} (max |logit| = {max_logit:.6g})"
        )
        self.epoch = epoch
        self.batch = batch
        self.max_logit = max_logit
