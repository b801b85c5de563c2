"""Exception and warning types shared across the package."""


class GeowaveError(Exception):
    """Base class for all package-specific errors."""


class TrappedGeodesicError(GeowaveError):
    """A traced geodesic failed to exit the requested disk within the length cap."""


class BadDirectionError(GeowaveError):
    """An initial direction violated its normalization or orientation precondition."""


class NotConvergedError(GeowaveError):
    """An iterative solve (shooting, CG, power iteration) exhausted its budget."""


class DegenerateJacobianError(GeowaveError):
    """A shooting Jacobian became numerically singular (conjugate-point symptom)."""


class CFLViolationError(GeowaveError):
    """A requested time step exceeds the stability bound of the explicit scheme."""


class NonFiniteStateError(GeowaveError):
    """A wave solve produced NaN or Inf values."""


class ResolutionViolationError(GeowaveError):
    """A probe frequency exceeds what the spatial grid can resolve."""


class EigenFailureError(GeowaveError):
    """The sparse eigensolver failed to converge or returned an inconsistent set."""


class ResolventPoleError(GeowaveError):
    """An elliptic solve was requested at (or too close to) an eigenvalue."""


class InsufficientSmoothnessError(GeowaveError):
    """A boundary signal lacks the smoothness/compatibility the operation needs."""


class WindowTooWideError(GeowaveError):
    """An aperture window is wider than the fan spacing it is tabulated on."""


class NonPositiveFactorError(GeowaveError):
    """A conformal factor or recovered field violated positivity."""


class ConfigInvalidError(GeowaveError):
    """An experiment configuration failed validation."""


class TruncationWarning(UserWarning):
    """A truncated spectral series has an estimated tail above tolerance."""
