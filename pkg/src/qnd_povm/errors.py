"""Exception types raised by the library."""


class InvalidInputError(ValueError):
    """Arguments violate an operation's preconditions."""


class ImpossibleOutcomeError(ArithmeticError):
    """A detection record has (numerically) zero probability for the given state."""


class NoPeakError(ValueError):
    """The Gaussian peak equation has no real solution for the record."""


class UnsupportedInputError(ValueError):
    """The operation is not defined for this kind of state."""


class CutoffLeakageError(RuntimeError):
    """Population reached the top of the truncated Fock space."""


class IntegrationError(RuntimeError):
    """A fixed-step integration became unstable."""
