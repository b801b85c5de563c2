"""Geometrical-optics probes, their remainders, and the boundary pairing.

A probe anchored at a source point y on the middle circle consists of a
phase (the geodesic distance to y), a transported amplitude, a temporal
mollifier, and an angular aperture weight.  The high-frequency ansatz

    u = a(t, x) exp(i lam (psi(x) - t)),    a = alpha^{-1/4} phi(t - psi) b

solves the wave equation up to a remainder of size O(1/lam), because the
phase satisfies the eikonal equation |grad_g psi|_g = 1 and the amplitude
satisfies the transport equation 2 <grad a, grad psi>_g + a lap_g psi +
2 d_t a = 0 along the geodesic flow; alpha is the squared volume element
of geodesic polar coordinates at y and b is evaluated at the launch
aperture of the geodesic through x.

Pairing two such probes across the measurement operators of two
potentials turns the boundary data gap into a weighted angular average
of the geodesic ray transform of the potential difference, which is the
single extraction primitive every reconstruction pipeline consumes.

Chart construction.  Rather than Newton-shooting per target (the log
map), a single fan of geodesics is traced from the source and recorded
along arclength; the structured (arclength, launch-angle) -> position
table is then inverted at all targets at once by a vectorized Newton
iteration whose exact Jacobian columns are the recorded velocity and the
recorded Jacobi field times the unit normal.  Targets the table fails to
resolve fall back to the log map, which doubles as the independent
oracle route in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.special import i0e

from .errors import (
    DegenerateJacobianError,
    NotConvergedError,
    ResolutionViolationError,
)
from .fields import PolarGrid, ScalarField
from .geometry import (
    DiskOperators,
    WaveGrid,
    _rk4_step,
    aperture_angle,
    boundary_point,
    log_map,
)
from .wave import BoundarySignal, DtNOperator, WaveSolver

TWO_PI = 2.0 * np.pi

#: default anchor circle for probe sources (the middle disk boundary)
SOURCE_RADIUS = 1.15

#: default mollifier support as a fraction of the chart diameter 2R
SUPPORT_FRACTION = 0.1

#: default time horizon; must exceed max(psi) + eps0 so the amplitude
#: has closed support inside (0, T)
DEFAULT_HORIZON = 3.0


def resolvable_lambda(grid):
    """Largest probe frequency the grid resolves at ten points per
    wavelength 2 pi / lam of the radial spacing."""
    return np.pi / (5.0 * grid.h)


# ---------------------------------------------------------------------------
# temporal mollifier and angular aperture weights
# ---------------------------------------------------------------------------


class Mollifier:
    """Smooth bump phi supported in (0, eps0) with unit L^2 mass.

    The profile is exp(-1 / (tau (1 - tau))) in the scaled time
    tau = t / eps0, so the shape is independent of the support length;
    first and second derivatives are analytic, which the remainder
    sources need.  Normalization is by 200-point Gauss-Legendre
    quadrature of the squared profile, so `l2_mass()` returns 1 up to
    quadrature accuracy (the profile is flat to all orders at both
    endpoints, where Gauss-Legendre converges superalgebraically).
    """

    #: scaled times closer to the endpoints than this underflow to zero
    _EDGE = 1e-3

    def __init__(self, eps0):
        if eps0 <= 0:
            raise ValueError("mollifier support length must be positive")
        self.eps0 = float(eps0)
        nodes, weights = np.polynomial.legendre.leggauss(200)
        t = 0.5 * self.eps0 * (nodes + 1.0)
        w = 0.5 * self.eps0 * weights
        raw = self._raw(t)
        self.raw_l2_mass = float((raw**2 * w).sum())
        self._scale = 1.0 / np.sqrt(self.raw_l2_mass)
        self._quad = (t, w)

    def _tau(self, t):
        t = np.asarray(t, dtype=float)
        tau = t / self.eps0
        inside = (tau > self._EDGE) & (tau < 1.0 - self._EDGE)
        return tau, inside

    def _raw(self, t):
        tau, inside = self._tau(t)
        u = np.where(inside, tau * (1.0 - tau), 1.0)
        return np.where(inside, np.exp(-1.0 / u), 0.0)

    def __call__(self, t):
        return self._scale * self._raw(t)

    def d1(self, t):
        """First derivative of the normalized bump."""
        tau, inside = self._tau(t)
        u = np.where(inside, tau * (1.0 - tau), 1.0)
        du = 1.0 - 2.0 * tau
        # d/dt exp(-1/u) = exp(-1/u) * u' / u^2 / eps0
        val = np.where(inside, np.exp(-1.0 / u) * du / u**2, 0.0)
        return self._scale * val / self.eps0

    def d2(self, t):
        """Second derivative of the normalized bump."""
        tau, inside = self._tau(t)
        u = np.where(inside, tau * (1.0 - tau), 1.0)
        du = 1.0 - 2.0 * tau
        # g = 1/u: g' = -u'/u^2, g'' = 2/u^2 + 2 u'^2/u^3 (u'' = -2)
        gp = -du / u**2
        gpp = 2.0 / u**2 + 2.0 * du**2 / u**3
        val = np.where(inside, np.exp(-1.0 / u) * (gp**2 - gpp), 0.0)
        return self._scale * val / self.eps0**2

    def l2_mass(self):
        """Quadrature value of the squared normalized bump (== 1)."""
        t, w = self._quad
        return float((self(t) ** 2 * w).sum())


class ApertureWindow:
    """Periodic von-Mises window in the aperture angle, unit L^2 mass.

    w(gamma) = scale * exp((cos(gamma - center) - 1) / width^2); the
    normalization over the angle circle is the closed form
    int w_raw^2 = 2 pi exp(-2/width^2) I_0(2/width^2), evaluated with
    the scaled Bessel function for stability at narrow widths.  The
    window's smoothness budget is reported by `h2_ratio` (the discrete
    H^2/L^2 quotient), not asserted.
    """

    def __init__(self, center=0.0, width=0.5):
        if width <= 0:
            raise ValueError("aperture window width must be positive")
        self.center = float(center)
        self.width = float(width)
        self.raw_l2_mass = float(TWO_PI * i0e(2.0 / self.width**2))
        self._scale = 1.0 / np.sqrt(self.raw_l2_mass)

    def _raw(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        return np.exp((np.cos(gamma - self.center) - 1.0) / self.width**2)

    def __call__(self, gamma):
        return self._scale * self._raw(gamma)

    def d1(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        return -np.sin(gamma - self.center) / self.width**2 * self(gamma)

    def d2(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        s = np.sin(gamma - self.center)
        c = np.cos(gamma - self.center)
        return (s**2 / self.width**4 - c / self.width**2) * self(gamma)

    def mass(self):
        """Angular integral of the normalized window (the deconvolution
        constant for narrow-aperture ray sampling)."""
        g = np.linspace(-np.pi, np.pi, 4096, endpoint=False)
        return float(self(g).sum() * (TWO_PI / 4096))

    def h2_ratio(self):
        """Discrete H^2 / L^2 norm quotient of the window."""
        g = np.linspace(-np.pi, np.pi, 4096, endpoint=False)
        dg = TWO_PI / 4096
        w0 = (self(g) ** 2).sum() * dg
        w1 = (self.d1(g) ** 2).sum() * dg
        w2 = (self.d2(g) ** 2).sum() * dg
        return float(np.sqrt((w0 + w1 + w2) / w0))


def mu_weight(gamma):
    """Fan-beam transversality factor |<direction, normal>| = cos(gamma).

    This is the measure weight of the ray-transform pairing; the probe
    carrying it turns the boundary pairing into a plain angular integral
    of weighted ray data.  Clamped at zero beyond grazing.
    """
    return np.maximum(np.cos(np.asarray(gamma, dtype=float)), 0.0)


# ---------------------------------------------------------------------------
# geodesic polar chart of a boundary source
# ---------------------------------------------------------------------------


@dataclass
class FanTable:
    """Recorded geodesic fan from a source: states on an (arclength,
    launch-aperture) product grid."""

    source: np.ndarray
    gammas: np.ndarray
    step: float
    xs: np.ndarray  # (n_s, n_gamma, 2) positions
    vs: np.ndarray  # (n_s, n_gamma, 2) unit velocities
    js: np.ndarray  # (n_s, n_gamma) scalar Jacobi fields


def _trace_fan(metric, y, n_gamma=2049, step=5e-3, margin=0.12, max_length=None):
    """Trace and record a fan of unit-speed geodesics from y.

    The fan covers launch apertures up to arcsin((R + margin)/|y|), which
    reaches every point of the unit disk with room for the bending a
    collar-flat conformal factor can produce.
    """
    y = np.asarray(y, dtype=float)
    ry = float(np.hypot(y[0], y[1]))
    if max_length is None:
        max_length = 1.25 * (ry + 1.0)
    gmax = np.arcsin(min(1.0, (1.0 + margin) / ry))
    gammas = np.linspace(-gmax, gmax, n_gamma)
    base = np.arctan2(-y[1], -y[0])
    ang = base + gammas
    inv_sqrt_cy = 1.0 / np.sqrt(metric.c(y[None, :])[0])
    v = inv_sqrt_cy * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    x = np.broadcast_to(y, v.shape).copy()
    j = np.zeros(n_gamma)
    jp = np.ones(n_gamma)
    n_s = int(np.ceil(max_length / step))
    xs = np.empty((n_s + 1, n_gamma, 2))
    vs = np.empty((n_s + 1, n_gamma, 2))
    js = np.empty((n_s + 1, n_gamma))
    xs[0], vs[0], js[0] = x, v, j
    for i in range(n_s):
        x, v, j, jp = _rk4_step(metric, x, v, step, j, jp)
        xs[i + 1], vs[i + 1], js[i + 1] = x, v, j
    return FanTable(source=y, gammas=gammas, step=step, xs=xs, vs=vs, js=js)


def _fan_lookup(fan, s, g, want_v=True):
    """Bilinear fan-table states at arclengths s and apertures g."""
    n_s, n_g = fan.js.shape
    dg = fan.gammas[1] - fan.gammas[0]
    si = np.clip(s / fan.step, 0.0, n_s - 1.0)
    gi = np.clip((g - fan.gammas[0]) / dg, 0.0, n_g - 1.0)
    i0 = np.clip(si.astype(int), 0, n_s - 2)
    k0 = np.clip(gi.astype(int), 0, n_g - 2)
    fs = si - i0
    fg = gi - k0
    w00 = (1 - fs) * (1 - fg)
    w01 = (1 - fs) * fg
    w10 = fs * (1 - fg)
    w11 = fs * fg

    def take(tab):
        return (
            w00[..., None] * tab[i0, k0]
            + w01[..., None] * tab[i0, k0 + 1]
            + w10[..., None] * tab[i0 + 1, k0]
            + w11[..., None] * tab[i0 + 1, k0 + 1]
        )

    xh = take(fan.xs)
    if not want_v:
        return xh
    vh = take(fan.vs)
    jh = take(fan.js[..., None])[..., 0]
    return xh, vh, jh


def _fan_splines(fan):
    """Bicubic interpolating splines of the fan table, cached on the fan.

    Unlike local cubic stencils, the global spline is twice continuously
    differentiable across knots, so chart fields read from it can be
    differentiated by second-difference instruments without picking up
    curvature jumps at the recorded rays.
    """
    sp = getattr(fan, "_splines", None)
    if sp is None:
        s_ax = fan.step * np.arange(fan.xs.shape[0])
        sp = tuple(
            RectBivariateSpline(s_ax, fan.gammas, tab, kx=3, ky=3, s=0)
            for tab in (fan.xs[..., 0], fan.xs[..., 1], fan.js)
        )
        fan._splines = sp
    return sp


def _fan_lookup_smooth(fan, s, g, want_j=False):
    """Spline fan-table positions (and Jacobi fields) at (s, g)."""
    spx, spy, spj = _fan_splines(fan)
    xh = np.stack([spx.ev(s, g), spy.ev(s, g)], axis=-1)
    if not want_j:
        return xh
    return xh, spj.ev(s, g)


def _newton_on_fan(metric, fan, pts, s, g, scale, max_iter, tol):
    """Damped Newton inversion of the fan table, in place on (s, g).

    The Jacobian columns are the recorded velocity (d position /
    d arclength) and the Jacobi field times the unit normal (d position /
    d aperture); steps that fail to reduce a point's residual are halved
    for that point alone.
    """
    s_max = fan.step * (fan.js.shape[0] - 1)
    g_lo, g_hi = fan.gammas[0], fan.gammas[-1]
    res = np.full(len(pts), np.inf)
    for _ in range(max_iter):
        xh, vh, jh = _fan_lookup(fan, s, g)
        err = xh - pts
        res = np.abs(err).max(axis=1) / scale
        if res.max() < tol:
            break
        nh = metric.rotate90(xh, vh)
        det = vh[:, 0] * jh * nh[:, 1] - vh[:, 1] * jh * nh[:, 0]
        det = np.where(np.abs(det) < 1e-13, np.copysign(1e-13, det), det)
        ds = (-err[:, 0] * jh * nh[:, 1] + err[:, 1] * jh * nh[:, 0]) / det
        dg = (-vh[:, 0] * err[:, 1] + vh[:, 1] * err[:, 0]) / det
        ds = np.clip(ds, -0.4, 0.4)
        dg = np.clip(dg, -0.3, 0.3)
        damp = np.ones_like(s)
        s_try = np.clip(s + ds, 0.0, s_max)
        g_try = np.clip(g + dg, g_lo, g_hi)
        for _ in range(5):
            x_try = _fan_lookup(fan, s_try, g_try, want_v=False)
            res_try = np.abs(x_try - pts).max(axis=1) / scale
            worse = res_try > res
            if not worse.any():
                break
            damp = np.where(worse, 0.5 * damp, damp)
            s_try = np.clip(s + damp * ds, 0.0, s_max)
            g_try = np.clip(g + damp * dg, g_lo, g_hi)
        s, g = s_try, g_try
    xh = _fan_lookup(fan, s, g, want_v=False)
    res = np.abs(xh - pts).max(axis=1) / scale
    return s, g, res


@dataclass
class GeodesicChart:
    """Geodesic polar coordinates of targets with respect to a source.

    psi is the geodesic distance, gamma the launch aperture (signed fan
    angle from the inward normal, matching the ray-transform convention),
    alpha the squared volume element (Jacobi field squared).
    """

    source: np.ndarray
    psi: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    residual: float
    fallback_count: int


def geodesic_chart(metric, y, pts, n_gamma=2049, step=5e-3, margin=0.12,
                   fan=None, tol=1e-11, max_iter=30):
    """Invert the geodesic fan of y at chart points.

    Damped Newton on the recorded fan table with the exact shooting
    Jacobian (endpoint velocity and Jacobi field times the unit
    normal); points the chord initial guess strands are restarted from
    the nearest recorded fan state, a Catmull-Rom polish removes the
    bilinear table's interpolation error, and anything still
    unconverged falls back to the log map.
    """
    y = np.asarray(y, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if fan is None:
        fan = _trace_fan(metric, y, n_gamma=n_gamma, step=step, margin=margin)
    d = pts - y
    s = np.hypot(d[:, 0], d[:, 1])
    if np.any(s < 1e-9):
        raise DegenerateJacobianError("chart targets coincide with the source")
    base = np.arctan2(-y[1], -y[0])
    ang = np.arctan2(d[:, 1], d[:, 0])
    g = (ang - base + np.pi) % TWO_PI - np.pi
    g = np.clip(g, fan.gammas[0], fan.gammas[-1])
    scale = np.maximum(1.0, s)
    s, g, res = _newton_on_fan(metric, fan, pts, s, g, scale, max_iter, tol)

    stuck = res > 1e-7
    if stuck.any():
        # restart from the recorded fan state nearest each stuck target
        sub_x = fan.xs[::8, ::8]
        sub_s = fan.step * np.arange(fan.xs.shape[0])[::8]
        sub_g = fan.gammas[::8]
        diff = pts[stuck][:, None, :] - sub_x.reshape(-1, 2)[None, :, :]
        k = (diff**2).sum(axis=2).argmin(axis=1)
        ki, kk = np.unravel_index(k, sub_x.shape[:2])
        s2, g2, r2 = _newton_on_fan(
            metric, fan, pts[stuck], sub_s[ki], sub_g[kk], scale[stuck],
            max_iter, tol,
        )
        s[stuck], g[stuck], res[stuck] = s2, g2, r2

    # spline polish: correct (s, g) for the bilinear table's model error
    for _ in range(2):
        xh, vh, jh = _fan_lookup(fan, s, g)
        err = _fan_lookup_smooth(fan, s, g) - pts
        nh = metric.rotate90(xh, vh)
        det = vh[:, 0] * jh * nh[:, 1] - vh[:, 1] * jh * nh[:, 0]
        det = np.where(np.abs(det) < 1e-13, np.copysign(1e-13, det), det)
        ds = (-err[:, 0] * jh * nh[:, 1] + err[:, 1] * jh * nh[:, 0]) / det
        dg = (-vh[:, 0] * err[:, 1] + vh[:, 1] * err[:, 0]) / det
        s = np.clip(s + np.clip(ds, -0.05, 0.05), 0.0,
                    fan.step * (fan.js.shape[0] - 1))
        g = np.clip(g + np.clip(dg, -0.05, 0.05), fan.gammas[0], fan.gammas[-1])
    xh, jh = _fan_lookup_smooth(fan, s, g, want_j=True)
    res = np.abs(xh - pts).max(axis=1) / scale

    bad = res > 1e-7
    n_bad = int(bad.sum())
    if n_bad:
        out = log_map(metric, y, pts[bad])
        s[bad] = out.r
        g[bad] = aperture_angle(np.broadcast_to(y, (n_bad, 2)), out.dirs)
        jh[bad] = out.jacobi
        res[bad] = out.residual
    alpha = jh**2
    if np.any(alpha <= 1e-12 * np.maximum(s, 1e-6) ** 2):
        raise DegenerateJacobianError(
            "volume element vanished on the chart (conjugate point)"
        )
    return GeodesicChart(
        source=y,
        psi=s,
        gamma=g,
        alpha=alpha,
        residual=float(res.max()),
        fallback_count=n_bad,
    )


# ---------------------------------------------------------------------------
# residual instrument: centered Cartesian stencils of charted fields
# ---------------------------------------------------------------------------


class _ResidualInstrument:
    """Second-order residual evaluation of a source's chart fields.

    Charts every raster node together with its four Cartesian stencil
    neighbors (step = half the raster spacing) and differentiates the
    charted phase and amplitude by centered differences.  The stencil is
    entirely independent of the geodesic tracer's own derivatives, has
    no coordinate pole, and needs no one-sided rows (the chart extends
    past the unit circle), so halving the raster spacing divides the
    truncation error by four.
    """

    def __init__(self, metric, y, grid, fan, stencil_fraction=0.5):
        self.metric = metric
        self.grid = grid
        self.e = stencil_fraction * grid.h
        x0 = grid.nodes_xy()
        n = len(x0)
        e1 = np.array([self.e, 0.0])
        e2 = np.array([0.0, self.e])
        pts = np.vstack([x0, x0 + e1, x0 - e1, x0 + e2, x0 - e2])
        chart = geodesic_chart(metric, y, pts, fan=fan)
        self.chart_residual = chart.residual
        self.fallback_count = chart.fallback_count
        self.psi = chart.psi.reshape(5, n)
        self.gamma = chart.gamma.reshape(5, n)
        self.alpha = chart.alpha.reshape(5, n)
        self.c = metric.c(x0)
        self.vol = grid.cell_volumes(metric).ravel()
        p = self.psi
        self.psi_x = (p[1] - p[2]) / (2.0 * self.e)
        self.psi_y = (p[3] - p[4]) / (2.0 * self.e)
        # conformal metric in two dimensions: lap_g = lap / c
        self.lap_g_psi = (p[1] + p[2] + p[3] + p[4] - 4.0 * p[0]) / self.e**2 / self.c
        self.eik = (self.psi_x**2 + self.psi_y**2) / self.c - 1.0

    @property
    def eikonal_sup(self):
        return float(np.abs(self.eik).max())

    @property
    def eikonal_l2(self):
        return float(np.sqrt((self.eik**2 * self.vol).sum()))

    def amplitude_fields(self, b):
        """Stationary amplitude A = alpha^{-1/4} b(gamma) on the stencil."""
        return self.alpha ** (-0.25) * b(self.gamma)

    def transport_residuals(self, b):
        """(transport, second-order coefficient) L^2 residuals for b.

        The transport defect is the mollifier's coefficient field
        2 <grad A, grad psi>_g + A lap_g psi; the second-order
        coefficient field is A (|grad psi|_g^2 - 1).  Both collapse to
        spatial L^2 norms because the mollifier has unit L^2 mass.
        """
        A = self.amplitude_fields(b)
        A_x = (A[1] - A[2]) / (2.0 * self.e)
        A_y = (A[3] - A[4]) / (2.0 * self.e)
        grad_dot = (A_x * self.psi_x + A_y * self.psi_y) / self.c
        defect = 2.0 * grad_dot + A[0] * self.lap_g_psi
        t_res = float(np.sqrt((defect**2 * self.vol).sum()))
        e_res = float(np.sqrt(((A[0] * self.eik) ** 2 * self.vol).sum()))
        return t_res, e_res


@dataclass
class PhaseReport:
    """Tabulated distance-to-source phase with its eikonal residual.

    The residual field is |grad_g psi|_g^2 - 1, differentiated by the
    independent stencil instrument; the sup norm over the disk and the
    volume-weighted L^2 norm are reported.
    """

    phase: ScalarField
    sup_residual: float
    l2_residual: float

    @property
    def values(self):
        return self.phase.values


def eikonal_phase(metric, y, grid=None, stencil_fraction=0.5, fan=None,
                  **fan_kw):
    """Distance-to-source phase on a polar raster with residual report."""
    y = np.asarray(y, dtype=float)
    if np.hypot(y[0], y[1]) <= 1.0 + 1e-12:
        raise ValueError("probe sources must lie outside the closed unit disk")
    if grid is None:
        grid = PolarGrid(1.0, 256, 512)
    if fan is None:
        fan = _trace_fan(metric, y, **fan_kw)
    inst = _ResidualInstrument(metric, y, grid, fan,
                               stencil_fraction=stencil_fraction)
    return PhaseReport(
        phase=ScalarField(grid, inst.psi[0].reshape(grid.shape)),
        sup_residual=inst.eikonal_sup,
        l2_residual=inst.eikonal_l2,
    )


@dataclass
class AmplitudeReport:
    """Transported amplitude with its discrete residuals.

    `spatial` tabulates the stationary factor A = alpha^{-1/4} b(gamma);
    the space-time amplitude is A(x) phi(t - psi(x)).  With the
    unit-mass mollifier, the L^2((0,T) x M) norm of the transport defect
    2 d_t a + 2 <grad a, grad psi>_g + a lap_g psi collapses to the
    spatial L^2 norm of the mollifier's coefficient, and likewise for
    the second-order coefficient a (|grad psi|_g^2 - 1); both are
    evaluated by the stencil instrument.
    """

    spatial: ScalarField
    phase: ScalarField
    mollifier: Mollifier
    transport_residual: float
    eikonal_coefficient_residual: float

    def values(self, times):
        """Space-time amplitude samples, shape (n_t, nr, ntheta)."""
        times = np.asarray(times, dtype=float)
        arg = times[:, None, None] - self.phase.values[None, :, :]
        return self.spatial.values[None, :, :] * self.mollifier(arg)


def transport_amplitude(metric, y, b, phi: Mollifier, grid=None,
                        stencil_fraction=0.5, fan=None, **fan_kw):
    """Transported amplitude on a polar raster with residual reports."""
    y = np.asarray(y, dtype=float)
    if np.hypot(y[0], y[1]) <= 1.0 + 1e-12:
        raise ValueError("probe sources must lie outside the closed unit disk")
    if grid is None:
        grid = PolarGrid(1.0, 256, 512)
    if fan is None:
        fan = _trace_fan(metric, y, **fan_kw)
    inst = _ResidualInstrument(metric, y, grid, fan,
                               stencil_fraction=stencil_fraction)
    shape = grid.shape
    amp = inst.amplitude_fields(b)[0].reshape(shape)
    t_res, e_res = inst.transport_residuals(b)
    return AmplitudeReport(
        spatial=ScalarField(grid, amp),
        phase=ScalarField(grid, inst.psi[0].reshape(shape)),
        mollifier=phi,
        transport_residual=t_res,
        eikonal_coefficient_residual=e_res,
    )


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


@dataclass
class GOProbe:
    """A geometrical-optics probe anchored at a boundary source.

    Carries the phase raster (distance to the source), the per-node
    chart tables on the wave grid, the temporal mollifier, the aperture
    weight, and the frequency.  `boundary_trace` yields the complex
    Dirichlet datum of the ansatz on the boundary circle; `amplitude`
    tabulates the real space-time amplitude on the wave-grid nodes.
    """

    source_point: np.ndarray
    lam: float
    mollifier: Mollifier
    weight: Callable
    phase: ScalarField | None
    grid: WaveGrid = field(repr=False)
    psi_nodes: np.ndarray = field(repr=False)
    gamma_nodes: np.ndarray = field(repr=False)
    alpha_nodes: np.ndarray = field(repr=False)
    horizon: float = DEFAULT_HORIZON
    eikonal_sup: float = np.nan
    transport_residual: float = np.nan
    eikonal_coefficient_residual: float = np.nan

    @property
    def amp_nodes(self):
        """Stationary amplitude factor alpha^{-1/4} b at the grid nodes."""
        return self.alpha_nodes ** (-0.25) * self.weight(self.gamma_nodes)

    def amplitude(self, times):
        """Real space-time amplitude on all grid nodes, (n_t, n_full)."""
        times = np.asarray(times, dtype=float)
        return self.amp_nodes[None, :] * self.mollifier(
            times[:, None] - self.psi_nodes[None, :]
        )

    def boundary_trace(self, times):
        """Complex Dirichlet datum of the ansatz on the boundary ring."""
        times = np.asarray(times, dtype=float)
        bnd = self.grid.boundary_slice
        psi_b = self.psi_nodes[bnd]
        amp_b = self.amp_nodes[bnd]
        phase = np.exp(1j * self.lam * (psi_b[None, :] - times[:, None]))
        vals = amp_b[None, :] * self.mollifier(
            times[:, None] - psi_b[None, :]
        ) * phase
        return BoundarySignal(times, self.grid.theta, vals)


class SourceChart:
    """Reusable per-source chart: one traced fan serves every window and
    frequency anchored at the same point.

    The wave-grid node tables (for solves and pairings) and the raster
    residual instrument (for the phase field and residual reports) are
    each built on first use, so sweeps that only assemble probes never
    pay for the instrument.
    """

    def __init__(self, metric, y, wave_grid=None, phase_grid=None,
                 horizon=DEFAULT_HORIZON, eps0=None, stencil_fraction=0.5,
                 n_gamma=2049, step=5e-3, margin=0.12):
        y = np.asarray(y, dtype=float)
        if np.hypot(y[0], y[1]) <= 1.0 + 1e-12:
            raise ValueError("probe sources must lie outside the closed unit disk")
        self.metric = metric
        self.y = y
        self.horizon = float(horizon)
        self.eps0 = 2.0 * SUPPORT_FRACTION if eps0 is None else float(eps0)
        self.wave_grid = WaveGrid(1.0, 48, 96) if wave_grid is None else wave_grid
        self.phase_grid = (
            PolarGrid(1.0, 256, 512) if phase_grid is None else phase_grid
        )
        self.stencil_fraction = stencil_fraction
        self.fan = _trace_fan(metric, y, n_gamma=n_gamma, step=step,
                              margin=margin)
        self._nodes = None
        self._instrument = None

    def _node_tables(self):
        if self._nodes is None:
            chart = geodesic_chart(self.metric, self.y,
                                   self.wave_grid.nodes_xy(), fan=self.fan)
            self._nodes = chart
        return self._nodes

    @property
    def instrument(self):
        if self._instrument is None:
            self._instrument = _ResidualInstrument(
                self.metric, self.y, self.phase_grid, self.fan,
                stencil_fraction=self.stencil_fraction,
            )
        return self._instrument

    @property
    def psi_nodes(self):
        return self._node_tables().psi

    @property
    def gamma_nodes(self):
        return self._node_tables().gamma

    @property
    def alpha_nodes(self):
        return self._node_tables().alpha

    @property
    def chart_residual(self):
        return self._node_tables().residual

    @property
    def fallback_count(self):
        return self._node_tables().fallback_count

    @property
    def phase_field(self):
        inst = self.instrument
        return ScalarField(self.phase_grid,
                           inst.psi[0].reshape(self.phase_grid.shape))

    @property
    def eikonal_sup(self):
        return self.instrument.eikonal_sup

    @property
    def eikonal_l2(self):
        return self.instrument.eikonal_l2

    def transport_residuals(self, b):
        """(transport, second-order coefficient) L^2 residuals for a weight."""
        return self.instrument.transport_residuals(b)

    def probe(self, lam, weight, mollifier=None, with_residuals=False):
        """Assemble a probe at frequency lam with an aperture weight.

        `with_residuals` additionally fills the probe's residual report
        from the stencil instrument (charting the residual raster on
        first use).
        """
        if lam <= 0:
            raise ValueError("probe frequency must be positive")
        phi = Mollifier(self.eps0) if mollifier is None else mollifier
        support_end = float(self.psi_nodes.max()) + phi.eps0
        if support_end > self.horizon:
            raise ValueError(
                f"amplitude support closes at {support_end:.3f}, beyond the "
                f"horizon {self.horizon}; enlarge the horizon or shrink eps0"
            )
        if with_residuals:
            t_res, e_res = self.transport_residuals(weight)
            eik_sup = self.eikonal_sup
            phase = self.phase_field
        else:
            t_res = e_res = eik_sup = np.nan
            phase = None
        return GOProbe(
            source_point=self.y,
            lam=float(lam),
            mollifier=phi,
            weight=weight,
            phase=phase,
            grid=self.wave_grid,
            psi_nodes=self.psi_nodes,
            gamma_nodes=self.gamma_nodes,
            alpha_nodes=self.alpha_nodes,
            horizon=self.horizon,
            eikonal_sup=eik_sup,
            transport_residual=t_res,
            eikonal_coefficient_residual=e_res,
        )


def build_probe(metric, y, lam, weight, wave_grid=None, horizon=DEFAULT_HORIZON,
                eps0=None, mollifier=None, with_residuals=True, **chart_kw):
    """One-shot probe construction (trace the source fan and assemble)."""
    chart = SourceChart(metric, y, wave_grid=wave_grid, horizon=horizon,
                        eps0=eps0, **chart_kw)
    return chart.probe(lam, weight, mollifier=mollifier,
                       with_residuals=with_residuals)


# ---------------------------------------------------------------------------
# remainder measurement
# ---------------------------------------------------------------------------


@dataclass
class RemainderReport:
    """Size of the exact-solution correction to the ansatz.

    sup norms over the marched window of the remainder's L^2 norm, its
    time derivative, and its gradient seminorm; the decay of sup_l2 with
    frequency (slope near -1) is the quantitative validity check of the
    geometrical-optics construction.
    """

    lam: float
    sup_l2: float
    sup_dt: float
    sup_grad: float
    dt: float
    n_steps: int
    backward: bool = False

    @property
    def sup_energy(self):
        return float(np.hypot(self.sup_dt, self.sup_grad))


def go_remainder(metric, q, probe: GOProbe, cfl=0.5, norm_stride=5,
                 backward=False):
    """March the remainder equation and report its norms.

    The remainder v solves (d_t^2 - lap_g + q) v = -exp(i lam (psi - t))
    k0 with zero Dirichlet data and zero initial (or, with
    `backward=True`, final) data, where k0 = (q - lap_g) A phi(t - psi)
    is the zeroth-order coefficient left by the ansatz; the eikonal and
    transport equations cancel the higher orders analytically, and their
    discrete defects are reported separately on the probe.  The backward
    solve reuses the forward march on the time-reversed source (the
    equation is even in time).
    """
    grid = probe.grid
    lam_max = resolvable_lambda(grid)
    if probe.lam > lam_max:
        raise ResolutionViolationError(
            f"frequency {probe.lam:.2f} exceeds the resolvable band "
            f"{lam_max:.2f} at ten points per wavelength"
        )
    solver = WaveSolver(metric, q, grid, cfl=cfl)
    times = solver.stable_times(probe.horizon)
    n_t = len(times)
    dt = float(times[1] - times[0])
    solver.check_dt(dt)
    ops = solver.ops
    n_int = grid.n_int
    amp_full = probe.amp_nodes
    w = solver.q_int * amp_full[:n_int] - ops.laplace(amp_full)
    psi_int = probe.psi_nodes[:n_int]
    lam = probe.lam
    phi = probe.mollifier
    horizon = times[-1]

    def source_at(t):
        tt = horizon - t if backward else t
        arg = tt - psi_int
        return -np.exp(1j * lam * (psi_int - tt)) * (phi(arg) * w)

    lap = ops.laplacian
    q_int = solver.q_int
    quad = ops.quad_weights
    u = np.zeros(grid.n_full, dtype=complex)
    u_prev = np.zeros(grid.n_full, dtype=complex)
    sup_l2 = 0.0
    sup_dt = 0.0
    sup_grad = 0.0

    def l2(vec_full):
        return float(np.sqrt((np.abs(vec_full) ** 2 * quad).sum().real))

    for n in range(n_t - 1):
        u_next = np.zeros(grid.n_full, dtype=complex)
        if n == 0:
            u_next[:n_int] = 0.5 * dt * dt * source_at(times[0])
        else:
            acc = lap @ u - q_int * u[:n_int] + source_at(times[n])
            u_next[:n_int] = 2.0 * u[:n_int] - u_prev[:n_int] + dt * dt * acc
        if n % norm_stride == 0 or n == n_t - 2:
            sup_l2 = max(sup_l2, l2(u))
            sup_dt = max(sup_dt, l2((u_next - u_prev) / (2.0 * dt)))
            sup_grad = max(
                sup_grad, float(np.sqrt(max(ops.energy_inner(u, u).real, 0.0)))
            )
        u_prev, u = u, u_next
    sup_l2 = max(sup_l2, l2(u))
    return RemainderReport(
        lam=lam,
        sup_l2=sup_l2,
        sup_dt=sup_dt,
        sup_grad=sup_grad,
        dt=dt,
        n_steps=n_t - 1,
        backward=backward,
    )


# ---------------------------------------------------------------------------
# the boundary pairing and ray-sample extraction
# ---------------------------------------------------------------------------


@dataclass
class ProbePairing:
    """Two-sided evaluation of the probe pairing identity.

    `left` is the boundary functional: the measurement-gap trace of the
    forward probe paired against the conjugate of the auxiliary probe's
    datum over (0, T) x boundary.  `right` is the interior functional:
    the potential gap times the amplitude product integrated over
    space-time, which the geometrical-optics expansion predicts equal to
    `left` up to O(1/lam).  The orientation (sign) of `left` is fixed by
    the Green identity for the outward-normal measurement map: with
    q-gap = q1 - q2, left = + integral (L1 - L2)(f) conj(g).
    """

    lam: float
    left: complex
    right: float
    defect: float


def _check_probe_pair(op1: DtNOperator, op2: DtNOperator, probe1: GOProbe,
                      probe2: GOProbe):
    g = probe1.grid
    for op in (op1, op2):
        if (op.grid.nr, op.grid.ntheta, op.grid.radius) != (
            g.nr, g.ntheta, g.radius,
        ):
            raise ValueError("probes and operators must share the wave grid")
    if probe2.grid is not g and (
        (probe2.grid.nr, probe2.grid.ntheta) != (g.nr, g.ntheta)
    ):
        raise ValueError("probes must share the wave grid")
    if not np.allclose(probe1.source_point, probe2.source_point):
        raise ValueError("paired probes must share the source point")
    if probe1.lam != probe2.lam:
        raise ValueError("paired probes must share the frequency")
    m1, m2 = probe1.mollifier, probe2.mollifier
    if abs(m1.eps0 - m2.eps0) > 1e-12:
        raise ValueError("paired probes must share the mollifier")


def probe_pairing(op1: DtNOperator, op2: DtNOperator, probe1: GOProbe,
                  probe2: GOProbe, times=None):
    """Evaluate both sides of the pairing identity for two probes.

    probe2 carries the analysis window b and drives the measured datum
    f; probe1 carries the transversality weight mu and supplies the
    auxiliary datum g.  When the operators' potentials are known (always
    true here: they are stored on the operators), the interior side is
    computed directly, making the pairing a validation instrument.
    """
    _check_probe_pair(op1, op2, probe1, probe2)
    if times is None:
        times = op1._solver.stable_times(probe1.horizon)
    f_sig = probe2.boundary_trace(times)
    g_sig = probe1.boundary_trace(times)
    t1 = op1.apply(f_sig)
    t2 = op2.apply(f_sig)
    gap = BoundarySignal(times, f_sig.angles, t1.values - t2.values)
    left = g_sig.inner_l2(gap)

    solver1, solver2 = op1._solver, op2._solver
    q_gap = solver1.q_int - solver2.q_int
    n_int = probe1.grid.n_int
    quad = solver1.ops.quad_weights[:n_int]
    amps = probe1.amp_nodes[:n_int] * probe2.amp_nodes[:n_int]
    psi = probe1.psi_nodes[:n_int]
    w_t = np.full(len(times), times[1] - times[0])
    w_t[0] *= 0.5
    w_t[-1] *= 0.5
    phi = probe1.mollifier
    time_mass = np.zeros(n_int)
    chunk = max(1, int(2e6) // n_int)
    for k in range(0, len(times), chunk):
        tt = times[k : k + chunk, None]
        time_mass += (
            w_t[k : k + chunk, None] * phi(tt - psi[None, :]) ** 2
        ).sum(axis=0)
    right = float((quad * q_gap * amps * time_mass).sum())
    return ProbePairing(
        lam=probe1.lam,
        left=complex(left),
        right=right,
        defect=float(abs(left - right)),
    )


def extract_ray_sample(op1: DtNOperator, op2: DtNOperator, y, b, lam,
                       chart: SourceChart = None, horizon=DEFAULT_HORIZON,
                       eps0=None, mollifier=None):
    """Estimate the b-and-mu weighted angular integral of the ray
    transform of the potential gap at a boundary source.

    The boundary pairing of a b-weighted probe against a mu-weighted
    probe, divided by the mollifier's L^2 mass, converges (in the probe
    frequency) to int b(gamma) mu(gamma) I(q1 - q2)(y, gamma) d gamma.
    A precomputed `chart` for y lets sweeps reuse the traced fan.
    """
    if chart is None:
        chart = SourceChart(op1.metric, y, wave_grid=op1.grid, horizon=horizon,
                            eps0=eps0)
    phi = Mollifier(chart.eps0) if mollifier is None else mollifier
    probe_b = chart.probe(lam, b, mollifier=phi)
    probe_mu = chart.probe(lam, mu_weight, mollifier=phi)
    pairing = probe_pairing(op1, op2, probe_mu, probe_b)
    return pairing.left.real / phi.l2_mass()


# ---------------------------------------------------------------------------
# frequency selection
# ---------------------------------------------------------------------------


@dataclass
class LambdaChoice:
    """Minimizer of the model error lam^{-1} + lam^3 epsilon."""

    lam: float
    clamped: bool
    objective: float


def lambda_opt(epsilon, lam_max=None):
    """Optimal probe frequency for a measured data-gap size.

    Balancing the O(1/lam) geometrical-optics error against the lam^3
    growth of the pairing's data sensitivity gives lam* =
    (3 epsilon)^{-1/4}; the result is clamped to the resolvable band
    when a grid limit is supplied.
    """
    if epsilon <= 0:
        raise ValueError("the data-gap estimate must be positive")
    lam = (3.0 * epsilon) ** (-0.25)
    clamped = False
    if lam_max is not None and lam > lam_max:
        lam = float(lam_max)
        clamped = True
    return LambdaChoice(
        lam=float(lam),
        clamped=clamped,
        objective=float(1.0 / lam + lam**3 * epsilon),
    )
