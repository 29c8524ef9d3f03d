"""Exception hierarchy.

Two families matter to callers: :class:`DataError` (bad inputs, files,
labels) and :class:`NumericalFailure` (a solver that should not fail did).
The CLI maps them to distinct exit codes.
"""


class ChoquetFuseError(Exception):
    """Base class for every error raised by this package."""


class DataError(ChoquetFuseError, ValueError):
    pass


class InvalidDensityError(DataError):
    pass


class InvalidSubsetError(DataError, IndexError):
    pass


class DimensionError(DataError):
    pass


class InvalidLabelError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class DegenerateLabelsError(DataError):
    pass


class InvalidInputError(DataError):
    pass


class EmptyModelError(DataError):
    pass


class ConfigError(ChoquetFuseError, ValueError):
    """Invalid or unknown configuration; treated as a usage error."""


class NumericalFailure(ChoquetFuseError, ArithmeticError):
    pass
