"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class CommonEigError(Exception):
    """Base class for every error raised by the package."""


class NotHermitian(CommonEigError):
    pass


class SupportMismatch(CommonEigError):
    pass


class ShapeMismatch(CommonEigError):
    pass


class ParseError(CommonEigError):
    """Malformed instance or witness document.

    The ``location`` attribute holds a JSON-path style pointer such as
    ``$.checks[2].matrix``.
    """

    def __init__(self, message: str, location: str = "$"):
        super().__init__(f"{location}: {message}")
        self.location = location
        self.message = message


class NotTwoLocal(CommonEigError):
    pass


class TooLarge(CommonEigError):
    pass


class TooManyRows(CommonEigError):
    pass


class NotCommuting(CommonEigError):
    pass


class NotProjector(CommonEigError):
    pass


class DecompositionFailed(CommonEigError):
    pass


class CommutationViolation(CommonEigError):
    pass


class InfeasibleAssignment(CommonEigError):
    pass


class InternalInconsistency(CommonEigError):
    pass


class NotFullAlgebra(CommonEigError):
    pass


class NotInvolution(CommonEigError):
    pass


class NonCommutingGenerators(CommonEigError):
    pass


class NotQubit(CommonEigError):
    pass


class NotCommutativeTable(CommonEigError):
    pass


class MalformedClause(CommonEigError):
    pass


class NonCommutingTerms(CommonEigError):
    pass


class OddSize(CommonEigError):
    pass


class Inconclusive(CommonEigError):
    """A search hit its configured cap before reaching a decision."""
