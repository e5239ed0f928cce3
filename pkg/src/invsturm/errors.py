"""Exception hierarchy shared by all pipelines."""


class InvSturmError(Exception):
    """Base class for all toolkit failures."""


class SchemaError(InvSturmError):
    """Malformed input file; message carries the offending field."""


class IntegrationError(InvSturmError):
    """ODE integration failed; message names the spectral parameter."""


class BracketingError(InvSturmError):
    """Root finder was handed an interval without a sign change."""


class MissedRootError(InvSturmError):
    """Eigenvalue scan found fewer (or inconsistently indexed) roots than expected."""


class DegeneracyError(InvSturmError):
    """A quantity required to be nonzero (k_n, a non-target root gap) vanished."""


class ConditioningError(InvSturmError):
    """Dense solve hit a pivot below tolerance; carries the pivot magnitude."""

    def __init__(self, message: str, smallest_pivot: float = 0.0):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class InconsistentDataError(InvSturmError):
    """Spectral data incompatible with the model (kappa slope far from -1, ...)."""


class InvalidReconstructionError(InvSturmError):
    """Recovered coefficients violate a structural constraint (rho <= 0)."""


class OrderingError(InvSturmError):
    """Two-spectra input ordered inconsistently (sigma estimate non-positive)."""


class PoleError(InvSturmError):
    """Evaluation requested too close to a pole of a meromorphic ratio."""
