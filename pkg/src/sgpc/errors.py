"""Exception types raised by the training pipeline."""


class SGPCError(Exception):
    """Base class for all package errors."""


class DegenerateSiteError(SGPCError):
    """A candidate's site update is numerically singular and must be skipped."""


class NoCandidateError(SGPCError):
    """Every candidate in the working set was degenerate."""


class CandidateExhaustedError(SGPCError):
    """A candidate has (numerically) zero posterior variance."""


class StateCorruptionError(SGPCError):
    """An update drove a posterior variance negative beyond tolerance."""


class NumericalError(SGPCError):
    """A Cholesky factorization failed."""


class DataFormatError(SGPCError):
    """Malformed dataset, label or partition file."""
