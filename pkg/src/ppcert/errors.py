"""Exception hierarchy shared by every ppcert module."""


class PPCertError(Exception):
    """Base class for all library errors."""


class PreconditionError(PPCertError, ValueError):
    """An operation was called outside its documented domain."""


class ZeroEvidence(PreconditionError):
    """Conditioning on an output with zero marginal probability."""


class DegenerateInput(PreconditionError):
    pass


class SingularCorrelation(PreconditionError):
    """The correlation matrix has (numerically) zero smallest eigenvalue."""


class SamplingExhausted(PPCertError, RuntimeError):
    pass


class UndefinedMoments(PreconditionError):
    pass


class IndexMismatch(PreconditionError):
    pass


class UnsupportedPriorClass(PreconditionError):
    pass


class StructuralViolation(PreconditionError):
    """A kernel that must be data-independent depends on the data."""


class ConjugacyViolation(PreconditionError):
    pass


class ParseError(PPCertError, ValueError):
    """Input file or inline JSON does not match the expected schema."""


class PropertyViolation(PPCertError, AssertionError):
    """A property that the theory guarantees was observed to fail.

    ``witness`` carries whatever inputs reproduce the failure.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class EquivalenceViolation(PropertyViolation):
    pass
