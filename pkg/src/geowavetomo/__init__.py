"""Wave-equation travel-data tomography on conformal disk geometries.

Library layout:

- families:        smooth analytic field families (bumps, Gaussians, grids)
- fields:          polar rasters, ScalarField containers, CSV round trips
- geometry:        conformal metric, geodesic tracing, exp/log, simplicity
- xray:            geodesic ray transform, adjoint, normal operator, CG inversion
- wave:            leapfrog solver, Neumann traces, DtN operators and gaps
- go_probe:        geometrical-optics probes and DtN pairing extraction
- recon_potential: potential-gap reconstruction pipeline and stability sweep
- recon_conformal: conformal-factor pipeline (rho fields, modified probes)
- spectral:        Dirichlet eigendata, elliptic DtN, spectral-series DtN
- harness:         JSON-config experiment driver and CSV/manifest emission
"""

__version__ = "0.1.0"

from .errors import (
    BadDirectionError,
    CFLViolationError,
    ConfigInvalidError,
    DegenerateJacobianError,
    EigenFailureError,
    GeowaveError,
    InsufficientSmoothnessError,
    NonFiniteStateError,
    NonPositiveFactorError,
    NotConvergedError,
    ResolutionViolationError,
    ResolventPoleError,
    TrappedGeodesicError,
    TruncationWarning,
    WindowTooWideError,
)
from .geometry import ConformalMetric, DiskRadii

__all__ = [
    "__version__",
    "ConformalMetric",
    "DiskRadii",
    "GeowaveError",
    "BadDirectionError",
    "CFLViolationError",
    "ConfigInvalidError",
    "DegenerateJacobianError",
    "EigenFailureError",
    "InsufficientSmoothnessError",
    "NonFiniteStateError",
    "NonPositiveFactorError",
    "NotConvergedError",
    "ResolutionViolationError",
    "ResolventPoleError",
    "TrappedGeodesicError",
    "TruncationWarning",
    "WindowTooWideError",
]
