"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericsError -> 4.
"""


class SelarError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SelarError):
    """Invalid run or generator configuration."""


class DataError(SelarError):
    """Malformed or inconsistent input data (graph files, splits)."""


class GraphFormatError(DataError):
    """A TSV graph file violates the documented format.

    Carries the offending line number when one is known.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc = f" [{loc}]"
        super().__init__(f"{message}{loc}")
        self.path = path
        self.line = line


class TaskConstructionError(SelarError):
    """An auxiliary task could not be built (zero instances, no connected
    pairs). The runner drops the task and logs the reason."""


class NumericsError(SelarError):
    """Non-finite values detected during training or evaluation."""
