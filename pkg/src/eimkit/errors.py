"""Exception hierarchy.

Every error carries a stable ``exit_code`` so the CLI can map failures to
process exit codes (1 usage, 2 I/O, 3 numerical, 4 data).
"""


class EimError(Exception):
    exit_code = 4


class UsageError(EimError):
    exit_code = 1


class StorageError(EimError):
    exit_code = 2


class NumericalError(EimError):
    exit_code = 3


class DataError(EimError):
    exit_code = 4


class RecordError(DataError):
    """A malformed or out-of-range input record."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class SingularDesignError(NumericalError):
    def __init__(self, collinear):
        self.collinear = list(collinear)
        super().__init__("singular design; collinear columns: " + ", ".join(self.collinear))


class SeparationError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, iterations=None, lam=None):
        self.iterations = iterations
        self.lam = lam
        super().__init__(message)


class DegenerateError(DataError):
    """Inputs for which the requested quantity is undefined (zero margins, single class...)."""
