"""Exception types shared across the package."""


class HomsimError(Exception):
    """Base class for all package-specific errors."""


class InvalidSectorError(HomsimError, ValueError):
    """Requested excitation sector outside the truncated space (0, 1, 2)."""


class InvalidStateError(HomsimError, ValueError):
    """Occupation numbers violate the basis invariants."""


class EmptySectorError(HomsimError, ValueError):
    """A lowering-type operator was requested from the vacuum sector."""


class SectorMismatchError(HomsimError, ValueError):
    """Operator/state sector bookkeeping does not line up."""


class ImpossibleJumpError(HomsimError, ValueError):
    """A collapse was requested for a detector with zero click rate."""


class IntegratorError(HomsimError, RuntimeError):
    """Propagation produced an unphysical state (norm growth beyond tolerance)."""


class DegenerateSummaryError(HomsimError, ValueError):
    """Ensemble statistics were requested but no trajectory completed."""
