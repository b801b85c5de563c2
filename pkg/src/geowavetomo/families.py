"""Smooth scalar-field families used for potentials and conformal factors.

Every family evaluates vectorized on arrays of chart points with shape
(N, 2) and provides analytic first and second derivatives where they are
cheap to write down.  Finite-difference fallbacks live on the metric side,
not here.
"""

from __future__ import annotations

import numpy as np

from .errors import NonPositiveFactorError


class ConstantField:
    """Spatially constant field."""

    def __init__(self, value=0.0):
        self.value = float(value)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.full(pts.shape[0], self.value)

    def grad(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.zeros((pts.shape[0], 2))

    def hess(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.zeros((pts.shape[0], 2, 2))


class RadialBump:
    """Compactly supported C-infinity bump.

    value(x) = amplitude * exp(-u / (1 - u)),  u = |x - center|^2 / width^2,

    supported on the open disk |x - center| < width, identically zero
    outside, and equal to `amplitude` at the center.  All derivatives
    vanish at the support edge, so sums of bumps stay smooth.
    """

    def __init__(self, center=(0.0, 0.0), width=0.5, amplitude=1.0):
        if width <= 0:
            raise ValueError("bump width must be positive")
        self.center = np.asarray(center, dtype=float)
        self.width = float(width)
        self.amplitude = float(amplitude)

    def _u(self, pts):
        d = pts - self.center
        return (d * d).sum(axis=1) / self.width**2, d

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        u, _ = self._u(pts)
        out = np.zeros(pts.shape[0])
        m = u < 1.0 - 1e-14
        um = u[m]
        out[m] = self.amplitude * np.exp(-um / (1.0 - um))
        return out

    def grad(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        u, d = self._u(pts)
        out = np.zeros((pts.shape[0], 2))
        m = u < 1.0 - 1e-12
        um = u[m]
        # dB/du = -B / (1-u)^2, computed in log space to dodge overflow
        dbdu = -np.exp(-um / (1.0 - um) - 2.0 * np.log1p(-um))
        du = 2.0 * d[m] / self.width**2
        out[m] = self.amplitude * dbdu[:, None] * du
        return out

    def hess(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        u, d = self._u(pts)
        out = np.zeros((pts.shape[0], 2, 2))
        m = u < 1.0 - 1e-12
        um = u[m]
        loga = -um / (1.0 - um)
        dbdu = -np.exp(loga - 2.0 * np.log1p(-um))
        d2bdu2 = np.exp(loga - 4.0 * np.log1p(-um)) * (2.0 * um - 1.0)
        du = 2.0 * d[m] / self.width**2
        eye = np.eye(2)
        out[m] = self.amplitude * (
            d2bdu2[:, None, None] * du[:, :, None] * du[:, None, :]
            + dbdu[:, None, None] * (2.0 / self.width**2) * eye
        )
        return out


class GaussianField:
    """Gaussian blob amplitude * exp(-|x - center|^2 / sigma^2).

    Not compactly supported, so unsuitable as a conformal factor gap, but
    ideal as a generic smooth test field: derivatives stay moderate.
    """

    def __init__(self, center=(0.0, 0.0), sigma=0.4, amplitude=1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.center = np.asarray(center, dtype=float)
        self.sigma = float(sigma)
        self.amplitude = float(amplitude)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.center
        return self.amplitude * np.exp(-(d * d).sum(axis=1) / self.sigma**2)

    def grad(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.center
        v = self.amplitude * np.exp(-(d * d).sum(axis=1) / self.sigma**2)
        return v[:, None] * (-2.0 * d / self.sigma**2)

    def hess(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.center
        v = self.amplitude * np.exp(-(d * d).sum(axis=1) / self.sigma**2)
        w = 2.0 / self.sigma**2
        outer = d[:, :, None] * d[:, None, :]
        return v[:, None, None] * (w**2 * outer - w * np.eye(2))


class SumField:
    """Pointwise sum of fields (used for multi-bump potentials)."""

    def __init__(self, *parts):
        self.parts = parts

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0])
        for p in self.parts:
            out += p(pts)
        return out

    def grad(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((pts.shape[0], 2))
        for p in self.parts:
            out += p.grad(pts)
        return out

    def hess(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((pts.shape[0], 2, 2))
        for p in self.parts:
            out += p.hess(pts)
        return out


class OnePlus:
    """1 + base, for conformal factors written as unit background plus a gap."""

    def __init__(self, base):
        self.base = base

    def __call__(self, pts):
        return 1.0 + self.base(pts)

    def grad(self, pts):
        return self.base.grad(pts)

    def hess(self, pts):
        return self.base.hess(pts)


class ProductField:
    """Pointwise product a*b with derivatives by the product rule."""

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def __call__(self, pts):
        return self.a(pts) * self.b(pts)

    def grad(self, pts):
        return (
            self.a.grad(pts) * self.b(pts)[:, None]
            + self.a(pts)[:, None] * self.b.grad(pts)
        )

    def hess(self, pts):
        av, bv = self.a(pts), self.b(pts)
        ag, bg = self.a.grad(pts), self.b.grad(pts)
        ah, bh = self.a.hess(pts), self.b.hess(pts)
        cross = ag[:, :, None] * bg[:, None, :]
        return (
            ah * bv[:, None, None]
            + cross
            + np.swapaxes(cross, 1, 2)
            + av[:, None, None] * bh
        )


class GridSampledField:
    """Field defined by samples on a rectilinear Cartesian grid.

    Values come from a bicubic spline, so first and second derivatives are
    available.  Outside the sampled rectangle the field is clamped to the
    `outside` constant; callers are expected to supply data that already
    equals `outside` near the rectangle edge.
    """

    def __init__(self, x, y, values, outside=1.0):
        from scipy.interpolate import RectBivariateSpline

        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.outside = float(outside)
        self._spl = RectBivariateSpline(self.x, self.y, self.values, kx=3, ky=3)

    @classmethod
    def from_csv(cls, path, outside=1.0):
        """Load samples from a CSV with columns x,y,c on a full grid."""
        raw = np.loadtxt(path, delimiter=",", skiprows=1)
        xs = np.unique(raw[:, 0])
        ys = np.unique(raw[:, 1])
        if len(xs) * len(ys) != raw.shape[0]:
            raise ValueError("grid CSV must sample a full rectilinear grid")
        vals = np.full((len(xs), len(ys)), np.nan)
        ix = np.searchsorted(xs, raw[:, 0])
        iy = np.searchsorted(ys, raw[:, 1])
        vals[ix, iy] = raw[:, 2]
        if np.isnan(vals).any():
            raise ValueError("grid CSV has missing (x, y) combinations")
        return cls(xs, ys, vals, outside=outside)

    def _inside(self, pts):
        return (
            (pts[:, 0] >= self.x[0])
            & (pts[:, 0] <= self.x[-1])
            & (pts[:, 1] >= self.y[0])
            & (pts[:, 1] <= self.y[-1])
        )

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.full(pts.shape[0], self.outside)
        m = self._inside(pts)
        if m.any():
            out[m] = self._spl(pts[m, 0], pts[m, 1], grid=False)
        return out

    def grad(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((pts.shape[0], 2))
        m = self._inside(pts)
        if m.any():
            out[m, 0] = self._spl(pts[m, 0], pts[m, 1], dx=1, grid=False)
            out[m, 1] = self._spl(pts[m, 0], pts[m, 1], dy=1, grid=False)
        return out

    def hess(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((pts.shape[0], 2, 2))
        m = self._inside(pts)
        if m.any():
            out[m, 0, 0] = self._spl(pts[m, 0], pts[m, 1], dx=2, grid=False)
            out[m, 1, 1] = self._spl(pts[m, 0], pts[m, 1], dy=2, grid=False)
            xy = self._spl(pts[m, 0], pts[m, 1], dx=1, dy=1, grid=False)
            out[m, 0, 1] = xy
            out[m, 1, 0] = xy
        return out


def conformal_factor_from_config(spec):
    """Build a conformal-factor field from a config mapping.

    Families: "euclidean" (c = 1), "conformal_bump" (1 + bump), and
    "conformal_grid" (bicubic interpolation of CSV samples x,y,c).
    """
    family = spec.get("family", "euclidean")
    if family == "euclidean":
        return ConstantField(1.0)
    if family == "conformal_bump":
        bump = RadialBump(
            center=spec.get("center", (0.0, 0.0)),
            width=spec.get("width", 0.4),
            amplitude=spec.get("amplitude", 0.05),
        )
        if bump.amplitude <= -1.0:
            raise NonPositiveFactorError(
                "bump amplitude %.3g makes the conformal factor nonpositive"
                % bump.amplitude
            )
        return OnePlus(bump)
    if family == "conformal_grid":
        return GridSampledField.from_csv(spec["path"], outside=1.0)
    raise ValueError("unknown metric family %r" % family)


def potential_from_config(spec):
    """Build a potential field from a config mapping (zero or bump sum)."""
    family = spec.get("family", "zero")
    if family == "zero":
        return ConstantField(0.0)
    if family == "bump":
        return RadialBump(
            center=spec.get("center", (0.0, 0.0)),
            width=spec.get("width", 0.3),
            amplitude=spec.get("amplitude", 0.5),
        )
    if family == "bumps":
        parts = [
            RadialBump(center=p["center"], width=p["width"], amplitude=p["amplitude"])
            for p in spec["parts"]
        ]
        return SumField(*parts)
    raise ValueError("unknown potential family %r" % family)
