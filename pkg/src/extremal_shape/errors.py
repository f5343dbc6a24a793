"""Exception hierarchy shared by all modules."""


class ExtremalShapeError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ExtremalShapeError, ValueError):
    """An argument is outside its admissible range."""


class UnsupportedDimensionError(ParameterError):
    pass


class SymmetryMismatchError(ExtremalShapeError):
    """A half-space or reflection is not an exact node permutation of the grid."""


class DegenerateInputError(ExtremalShapeError, ValueError):
    """Zero, constant, or otherwise degenerate field."""


class ConstraintError(ExtremalShapeError, ValueError):
    """A field violates a required linear constraint (e.g. zero average)."""


class GridMismatchError(ExtremalShapeError, ValueError):
    pass


class InitError(ExtremalShapeError):
    pass


class NumericalFailureError(ExtremalShapeError, RuntimeError):
    """An iterative method failed to converge.

    ``trace`` carries whatever diagnostic history the method recorded.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class BracketError(NumericalFailureError):
    """No sign change inside the requested bracket; ``trace`` holds the probed table."""


class ResolutionError(NumericalFailureError):
    pass
