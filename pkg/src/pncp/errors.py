"""Exception hierarchy shared by all modules."""


class PncpError(Exception):
    """Base class for library errors."""


class DimensionMismatch(PncpError, ValueError):
    pass


class ModeMismatch(PncpError, TypeError):
    """Float and rational objects were combined."""


class NonSymmetricBlock(PncpError, ValueError):
    pass


class BasisDeficient(PncpError, ValueError):
    """A target monomial cannot be produced by the Gram basis or free terms."""

    def __init__(self, monomial):
        super().__init__(f"monomial {monomial} is not covered by the basis")
        self.monomial = monomial


class IndependenceFailure(PncpError):
    pass


class ExhaustedAttempts(PncpError):
    pass


class _SearchFailure(PncpError):
    """Carries the last certification outcome for reporting."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class NoDeltaFound(_SearchFailure):
    pass


class FinalFormIsSos(_SearchFailure):
    pass


class RationalizationError(PncpError):
    """Exact certification failed; ``reason`` names the failing stage."""

    def __init__(self, reason, detail=""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail
