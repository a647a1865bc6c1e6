"""Exception hierarchy shared by all nlslab modules."""


class NlsLabError(Exception):
    """Base class for every error raised by the package."""


class DataError(NlsLabError, ValueError):
    """Input field contains non-finite values or violates a structural constraint."""


class SnapshotFormatError(NlsLabError):
    """Snapshot file is malformed (bad magic, truncated payload)."""


class UnsupportedVersionError(SnapshotFormatError):
    pass


class ConvergenceError(NlsLabError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class BranchNotFoundError(ConvergenceError):
    """Ground-state iteration collapsed to the zero solution or had no admissible start."""


class DegenerateBranchError(NlsLabError):
    """q'(omega) vanishes (to tolerance): modulation coordinates are singular."""


class ContractViolation(NlsLabError, ValueError):
    """Caller broke a documented precondition."""


class EdgeProximityError(NlsLabError, ValueError):
    """Requested spectral parameter is too close to the continuum threshold."""
