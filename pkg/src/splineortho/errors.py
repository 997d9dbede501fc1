"""Exception types shared across the package."""


class AdmissibilityError(ValueError):
    """A knot sequence violates k-admissibility (range or multiplicity)."""


class ContractError(ValueError):
    """An operation was called with arguments outside its contract."""


class NumericalError(ArithmeticError):
    """A numerical factorization failed.

    ``pivot`` is the 1-based index of the failing leading minor when known.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class FeasibilityError(ValueError):
    """An adversarial configuration cannot be realized.

    ``max_feasible`` is the largest number of stages that would fit.
    """

    def __init__(self, message, max_feasible=None):
        super().__init__(message)
        self.max_feasible = max_feasible


class PlacementError(ValueError):
    """An atom would extend outside [0, 1]."""
