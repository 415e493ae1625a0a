"""Exception hierarchy shared by all modules."""


class PHFrailtyError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(PHFrailtyError, ValueError):
    """Shapes of matrices, vectors or data columns do not agree."""


class DomainError(PHFrailtyError, ValueError):
    """An argument lies outside the domain of the function."""


class ConstructionError(PHFrailtyError, ValueError):
    """Parameters do not define an admissible model."""


class DataError(PHFrailtyError, ValueError):
    """A dataset violates the input contract."""


class UnsupportedDataError(DataError):
    """The dataset is valid but cannot be fitted (e.g. no events)."""


class NumericError(PHFrailtyError, ArithmeticError):
    """A linear system or iteration broke down numerically."""


class AmbiguityError(NumericError):
    """The Jordan structure of the dominant eigenvalue cannot be decided.

    Attributes
    ----------
    candidates : tuple of int
        Block sizes consistent with the numerical evidence.
    """

    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = tuple(candidates)


class StateStarvationError(NumericError):
    """A phase received no expected occupation time in an EM update."""

    def __init__(self, state):
        super().__init__(f"phase {state} has zero expected sojourn time")
        self.state = state


class TruncationError(NumericError):
    """No finite upper integration limit met the tail-mass target."""
