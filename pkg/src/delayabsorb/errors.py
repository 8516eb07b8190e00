"""Exception hierarchy shared across modules.

Everything raised because of bad *data* (as opposed to programming errors)
derives from :class:`DataError`; the CLI maps those to exit status 2.
"""


class DataError(Exception):
    """Input data violates a module contract."""


class SchemaError(DataError):
    """A required column is missing from a delimited input file."""

    def __init__(self, column, path=None):
        self.column = column
        self.path = path
        where = f" in {path}" if path is not None else ""
        super().__init__(f"missing required column {column!r}{where}")


class NoTurnaroundData(DataError):
    def __init__(self, msg="no turnaround data"):
        super().__init__(msg)


class DegenerateLabels(DataError):
    def __init__(self, msg="degenerate labels"):
        super().__init__(msg)


class LeakageError(AssertionError):
    """An out-of-fold score was produced by a model that saw its row."""
