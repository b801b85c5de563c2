"""Conformal disk geometry: metric, geodesics, and discrete helpers.

The working chart is the plane; the metric is g = c(x) * g0 with g0 the
identity and c a smooth positive conformal factor equal to 1 outside the
inner disk.  Everything is written against three concentric disks

    M (radius_M) inside M1 (radius_M1) inside M2 (radius_M2),

with the wave equation and its boundary data living on M, the ray
transform on M1, and tracing head-room provided by M2.

Geodesics solve  x'' = (|x'|^2 grad c - 2 (grad c . x') x') / (2 c),
the conformal form of the Christoffel contraction.  The scalar Jacobi
field j (j'' + K j = 0, j(0) = 0, j'(0) = 1) rides along the same RK4
loop whenever derived quantities need it: conjugate-point detection, the
squared volume element alpha = j^2 in geodesic polar coordinates, and
Newton shooting Jacobians for the log map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadDirectionError,
    DegenerateJacobianError,
    NotConvergedError,
    NonPositiveFactorError,
    TrappedGeodesicError,
)
from .families import ConstantField, ProductField

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DiskRadii:
    """Radii of the nested working disks."""

    M: float = 1.0
    M1: float = 1.15
    M2: float = 1.3

    def __post_init__(self):
        if not (0 < self.M < self.M1 < self.M2):
            raise ValueError("disk radii must satisfy 0 < M < M1 < M2")


class _FDDerivatives:
    """Centered finite-difference grad/hess for factor families without them."""

    def __init__(self, fn, step=1e-4):
        self.fn = fn
        self.step = step

    def grad(self, pts):
        h = self.step
        out = np.empty((pts.shape[0], 2))
        for a in range(2):
            e = np.zeros(2)
            e[a] = h
            out[:, a] = (self.fn(pts + e) - self.fn(pts - e)) / (2 * h)
        return out

    def hess(self, pts):
        h = self.step
        out = np.empty((pts.shape[0], 2, 2))
        f0 = self.fn(pts)
        for a in range(2):
            e = np.zeros(2)
            e[a] = h
            out[:, a, a] = (self.fn(pts + e) - 2 * f0 + self.fn(pts - e)) / h**2
        ex = np.array([h, 0.0])
        ey = np.array([0.0, h])
        cross = (
            self.fn(pts + ex + ey)
            - self.fn(pts + ex - ey)
            - self.fn(pts - ex + ey)
            + self.fn(pts - ex - ey)
        ) / (4 * h**2)
        out[:, 0, 1] = cross
        out[:, 1, 0] = cross
        return out


class ConformalMetric:
    """Metric g = c(x) * identity on the plane.

    `factor` is a field object (see families) providing c, and ideally
    grad/hess; missing derivatives fall back to centered differences with
    step `fd_step`.  The factor must equal 1 for |x| >= radii.M so that
    boundary normals, fan angles, and exits live in a Euclidean collar.
    """

    def __init__(self, factor=None, radii=DiskRadii(), fd_step=1e-4, check=True):
        self.factor = factor if factor is not None else ConstantField(1.0)
        self.radii = radii
        self.fd_step = fd_step
        self._fd = _FDDerivatives(self.factor, fd_step)
        self._grad = getattr(self.factor, "grad", None) or self._fd.grad
        self._hess = getattr(self.factor, "hess", None) or self._fd.hess
        self.is_flat = isinstance(self.factor, ConstantField) and np.isclose(
            self.factor.value, 1.0
        )
        if check:
            self._check_collar()

    def _check_collar(self):
        th = np.linspace(0, TWO_PI, 64, endpoint=False)
        for rad in (self.radii.M, 0.5 * (self.radii.M + self.radii.M1), self.radii.M1):
            ring = rad * np.stack([np.cos(th), np.sin(th)], axis=1)
            cv = self.c(ring)
            if np.any(np.abs(cv - 1.0) > 1e-10):
                raise NonPositiveFactorError(
                    "conformal factor must equal 1 outside the inner disk "
                    "(offending radius %.3f)" % rad
                )
        probe = self.c(np.array([[0.0, 0.0], [0.3, 0.1], [-0.2, 0.4]]))
        if np.any(probe <= 0):
            raise NonPositiveFactorError("conformal factor must be positive")

    # -- pointwise tensor data -------------------------------------------

    def c(self, pts):
        return self.factor(np.atleast_2d(np.asarray(pts, dtype=float)))

    def grad_c(self, pts):
        return self._grad(np.atleast_2d(np.asarray(pts, dtype=float)))

    def hess_c(self, pts):
        return self._hess(np.atleast_2d(np.asarray(pts, dtype=float)))

    def sqrt_det(self, pts):
        # det(c * I) = c^2 in two dimensions
        return self.c(pts)

    def norm(self, pts, vecs):
        v = np.atleast_2d(vecs)
        return np.sqrt(self.c(pts) * (v * v).sum(axis=1))

    def unit(self, pts, vecs):
        v = np.atleast_2d(vecs)
        return v / self.norm(pts, v)[:, None]

    def inner(self, pts, u, v):
        return self.c(pts) * (np.atleast_2d(u) * np.atleast_2d(v)).sum(axis=1)

    def rotate90(self, pts, vecs):
        """g-unit normal obtained by rotating a g-unit vector by +90 deg.

        For a conformal metric the Euclidean rotation is already
        g-orthogonal and preserves the g-norm.
        """
        v = np.atleast_2d(vecs)
        return np.stack([-v[:, 1], v[:, 0]], axis=1)

    def geodesic_acc(self, pts, vecs):
        c = self.c(pts)
        gc = self.grad_c(pts)
        vv = (vecs * vecs).sum(axis=1)
        gv = (gc * vecs).sum(axis=1)
        return (vv[:, None] * gc - 2.0 * gv[:, None] * vecs) / (2.0 * c[:, None])

    def gauss_curvature(self, pts):
        """K = (|grad c|^2 - c * lap c) / (2 c^3) for g = c * identity."""
        c = self.c(pts)
        gc = self.grad_c(pts)
        hc = self.hess_c(pts)
        lap = hc[:, 0, 0] + hc[:, 1, 1]
        return ((gc * gc).sum(axis=1) - c * lap) / (2.0 * c**3)

    def scaled_by(self, extra_factor):
        """Metric (c * extra) * identity sharing this metric's radii."""
        return ConformalMetric(
            ProductField(self.factor, extra_factor),
            radii=self.radii,
            fd_step=self.fd_step,
        )


def boundary_point(radius, beta):
    beta = np.asarray(beta, dtype=float)
    return np.stack([radius * np.cos(beta), radius * np.sin(beta)], axis=-1)


def aperture_angle(y, direction):
    """Signed fan angle between an inward boundary direction and -y/|y|.

    Positive angles rotate counterclockwise from the inward normal; the
    result lies in (-pi, pi].  Valid at points where the metric is
    Euclidean (the collar outside the inner disk), which covers every fan
    anchor used in the package.
    """
    y = np.atleast_2d(y)
    d = np.atleast_2d(direction)
    n_in = -y / np.hypot(y[:, 0], y[:, 1])[:, None]
    cross = n_in[:, 0] * d[:, 1] - n_in[:, 1] * d[:, 0]
    dot = (n_in * d).sum(axis=1)
    return np.arctan2(cross, dot)


# ---------------------------------------------------------------------------
# batched RK4 tracing
# ---------------------------------------------------------------------------


def _rk4_step(metric, x, v, h, j=None, jp=None):
    """One RK4 step of the geodesic system, h scalar or (N, 1).

    When j, jp are given, the scalar Jacobi equation j'' = -K j is
    integrated through the same stages.
    """
    acc = metric.geodesic_acc
    k1v = acc(x, v)
    x2 = x + 0.5 * h * v
    v2 = v + 0.5 * h * k1v
    k2v = acc(x2, v2)
    x3 = x + 0.5 * h * v2
    v3 = v + 0.5 * h * k2v
    k3v = acc(x3, v3)
    x4 = x + h * v3
    v4 = v + h * k3v
    k4v = acc(x4, v4)
    xn = x + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    vn = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    if j is None:
        return xn, vn, None, None
    hs = h[:, 0] if np.ndim(h) else h
    K1 = metric.gauss_curvature(x)
    K2 = metric.gauss_curvature(x2)
    K3 = metric.gauss_curvature(x3)
    K4 = metric.gauss_curvature(x4)
    l1j, l1p = jp, -K1 * j
    l2j = jp + 0.5 * hs * l1p
    l2p = -K2 * (j + 0.5 * hs * l1j)
    l3j = jp + 0.5 * hs * l2p
    l3p = -K3 * (j + 0.5 * hs * l2j)
    l4j = jp + hs * l3p
    l4p = -K4 * (j + hs * l3j)
    jn = j + (hs / 6.0) * (l1j + 2.0 * l2j + 2.0 * l3j + l4j)
    jpn = jp + (hs / 6.0) * (l1p + 2.0 * l2p + 2.0 * l3p + l4p)
    return xn, vn, jn, jpn


def trace_to_lengths(metric, starts, dirs, lengths, step=5e-3, want_jacobi=False):
    """Integrate each unit-speed geodesic to its own arclength.

    Frozen rays take zero-length RK4 steps, which keeps the loop fully
    vectorized.  Returns (x, v, j, jp) at the requested arclengths; j and
    jp are None unless requested.
    """
    x = np.array(starts, dtype=float, copy=True)
    v = np.array(dirs, dtype=float, copy=True)
    remaining = np.array(lengths, dtype=float, copy=True)
    j = np.zeros(len(x)) if want_jacobi else None
    jp = np.ones(len(x)) if want_jacobi else None
    nsteps = int(np.ceil(remaining.max() / step)) if remaining.max() > 0 else 0
    for _ in range(nsteps):
        h = np.minimum(step, np.maximum(remaining, 0.0))[:, None]
        if not (h > 0).any():
            break
        x, v, j, jp = _rk4_step(metric, x, v, h, j, jp)
        remaining -= h[:, 0]
    return x, v, j, jp


@dataclass
class RadiusTraceResult:
    """Exit data for a batch of rays traced to a circle."""

    exit_t: np.ndarray
    exit_x: np.ndarray
    exit_v: np.ndarray
    trapped: np.ndarray
    exit_j: np.ndarray | None = None
    exit_jp: np.ndarray | None = None
    min_jacobi: np.ndarray | None = None
    conjugate: np.ndarray | None = None
    samples_x: np.ndarray | None = None
    samples_v: np.ndarray | None = None
    samples_j: np.ndarray | None = None
    n_samples: np.ndarray | None = None


def trace_to_radius(
    metric,
    starts,
    dirs,
    radius,
    step=5e-3,
    max_length=None,
    want_jacobi=False,
    record=False,
):
    """Trace unit-speed geodesics until they cross the circle |x| = radius.

    The crossing is refined by a few secant iterations on RK4 substeps, so
    exit times inherit the integrator's accuracy rather than O(step).
    With `record=True` the states at every step multiple of the arclength
    are kept (frozen rays repeat their exit state; `n_samples` tells how
    many leading samples are live).  Rays that fail to exit within
    `max_length` raise TrappedGeodesicError unless they are reported via
    the `trapped` mask by callers that can tolerate them.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    n = starts.shape[0]
    if max_length is None:
        max_length = 8.0 * radius
    x = starts.copy()
    v = dirs.copy()
    t = np.zeros(n)
    j = np.zeros(n) if want_jacobi else None
    jp = np.ones(n) if want_jacobi else None
    active = np.ones(n, dtype=bool)
    exit_t = np.full(n, np.nan)
    exit_x = np.zeros((n, 2))
    exit_v = np.zeros((n, 2))
    exit_j = np.zeros(n) if want_jacobi else None
    exit_jp = np.zeros(n) if want_jacobi else None
    min_j = np.full(n, np.inf) if want_jacobi else None
    conj = np.zeros(n, dtype=bool) if want_jacobi else None
    rec_x = [x.copy()] if record else None
    rec_v = [v.copy()] if record else None
    rec_j = [j.copy() if want_jacobi else None] if record else None
    nmax = int(np.ceil(max_length / step)) + 1
    n_samp = np.ones(n, dtype=int)

    for k in range(nmax):
        if not active.any():
            break
        h = np.where(active, step, 0.0)[:, None]
        xn, vn, jn, jpn = _rk4_step(metric, x, v, h, j, jp)
        rad_prev = np.hypot(x[:, 0], x[:, 1])
        rad_new = np.hypot(xn[:, 0], xn[:, 1])
        crossed = active & (rad_new >= radius) & (rad_prev < radius)
        if crossed.any():
            idx = np.nonzero(crossed)[0]
            s = step * (radius - rad_prev[idx]) / np.maximum(
                rad_new[idx] - rad_prev[idx], 1e-30
            )
            xs, vs, js, jps = x[idx], v[idx], None, None
            if want_jacobi:
                js, jps = j[idx], jp[idx]
            for _ in range(3):
                xe, ve, je, jpe = _rk4_step(metric, xs, vs, s[:, None], js, jps)
                re = np.hypot(xe[:, 0], xe[:, 1])
                denom = np.maximum(rad_new[idx] - re, 1e-30)
                s = np.clip(s + (radius - re) * (step - s) / denom, 0.0, step)
            xe, ve, je, jpe = _rk4_step(metric, xs, vs, s[:, None], js, jps)
            exit_t[idx] = t[idx] + s
            exit_x[idx] = xe
            exit_v[idx] = ve
            if want_jacobi:
                exit_j[idx] = je
                exit_jp[idx] = jpe
            active[idx] = False
        upd = active.copy()
        x = np.where(upd[:, None], xn, x)
        v = np.where(upd[:, None], vn, v)
        t = np.where(upd, t + step, t)
        if want_jacobi:
            j = np.where(upd, jn, j)
            jp = np.where(upd, jpn, jp)
            live = upd & (t > step * 1.5)
            min_j = np.where(live, np.minimum(min_j, j), min_j)
            conj |= live & (j <= 0.0)
        if record:
            rec_x.append(x.copy())
            rec_v.append(v.copy())
            rec_j.append(j.copy() if want_jacobi else None)
            n_samp += upd.astype(int)

    trapped = active
    res = RadiusTraceResult(
        exit_t=exit_t,
        exit_x=exit_x,
        exit_v=exit_v,
        trapped=trapped,
        exit_j=exit_j,
        exit_jp=exit_jp,
        min_jacobi=None if min_j is None else np.where(np.isfinite(min_j), min_j, 1.0),
        conjugate=conj,
    )
    if record:
        res.samples_x = np.stack(rec_x, axis=0)
        res.samples_v = np.stack(rec_v, axis=0)
        if want_jacobi:
            res.samples_j = np.stack(rec_j, axis=0)
        res.n_samples = n_samp
    return res


@dataclass
class Geodesic:
    """A single traced geodesic with its arclength samples.

    samples_t / samples / samples_v hold the arclength, position, and
    velocity at each integrator node, with the refined boundary crossing
    appended as the final row.
    """

    start: np.ndarray
    direction: np.ndarray
    step: float
    samples_t: np.ndarray
    samples: np.ndarray
    samples_v: np.ndarray
    exit_time: float
    exit_point: np.ndarray
    exit_direction: np.ndarray
    trapped: bool = False

    @property
    def length(self):
        return self.exit_time


def geodesic_trace(metric, x0, theta0, radius, step=5e-3, max_length=None):
    """Trace one unit-speed geodesic until it leaves the disk of `radius`."""
    x0 = np.asarray(x0, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    nrm = metric.norm(x0[None, :], theta0[None, :])[0]
    if abs(nrm - 1.0) > 1e-9:
        raise BadDirectionError(
            "direction must be g-unit (|theta|_g = %.3e)" % nrm
        )
    res = trace_to_radius(
        metric,
        x0[None, :],
        theta0[None, :],
        radius,
        step=step,
        max_length=max_length,
        record=True,
    )
    if res.trapped[0]:
        raise TrappedGeodesicError("geodesic did not exit the disk")
    ns = int(res.n_samples[0])
    xs = np.vstack([res.samples_x[:ns, 0, :], res.exit_x[0][None, :]])
    vs = np.vstack([res.samples_v[:ns, 0, :], res.exit_v[0][None, :]])
    ts = np.append(step * np.arange(ns), res.exit_t[0])
    return Geodesic(
        start=x0,
        direction=theta0,
        step=step,
        samples_t=ts,
        samples=xs,
        samples_v=vs,
        exit_time=float(res.exit_t[0]),
        exit_point=res.exit_x[0],
        exit_direction=res.exit_v[0],
    )


def exp_map(metric, y, vecs, step=5e-3):
    """Riemannian exponential at y applied to a batch of tangent vectors."""
    y = np.asarray(y, dtype=float)
    vecs = np.atleast_2d(np.asarray(vecs, dtype=float))
    lengths = metric.norm(np.broadcast_to(y, vecs.shape), vecs)
    with np.errstate(invalid="ignore", divide="ignore"):
        dirs = np.where(lengths[:, None] > 0, vecs / np.maximum(lengths, 1e-300)[:, None], 0.0)
    starts = np.broadcast_to(y, vecs.shape).copy()
    x, _, _, _ = trace_to_lengths(metric, starts, dirs, lengths, step=step)
    return x


@dataclass
class LogResult:
    """Batched output of the log map at a fixed base point."""

    r: np.ndarray
    angle: np.ndarray
    dirs: np.ndarray
    end_x: np.ndarray
    end_v: np.ndarray
    jacobi: np.ndarray
    jacobi_p: np.ndarray
    residual: float

    def tangent(self):
        return self.r[:, None] * self.dirs


def log_map(metric, y, targets, step=5e-3, tol=1e-10, max_iter=50):
    """Invert the exponential map at y by Newton shooting.

    The 2x2 shooting Jacobian is exact up to the integrator: column one is
    the endpoint velocity (variation in arclength), column two the scalar
    Jacobi field times the g-unit normal (variation in launch angle).
    Raises NotConvergedError / DegenerateJacobianError on failure.
    """
    y = np.asarray(y, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = targets.shape[0]
    d = targets - y
    r = np.hypot(d[:, 0], d[:, 1])
    if np.any(r < 1e-12):
        raise BadDirectionError("log map target coincides with the base point")
    ang = np.arctan2(d[:, 1], d[:, 0])
    inv_sqrt_cy = 1.0 / np.sqrt(metric.c(y[None, :])[0])
    starts = np.broadcast_to(y, targets.shape).copy()
    scale = np.maximum(1.0, r)

    def shoot(r_, ang_):
        dirs_ = inv_sqrt_cy * np.stack([np.cos(ang_), np.sin(ang_)], axis=1)
        xe_, ve_, je_, jpe_ = trace_to_lengths(
            metric, starts, dirs_, r_, step=step, want_jacobi=True
        )
        err_ = xe_ - targets
        return dirs_, xe_, ve_, je_, jpe_, err_, np.abs(err_).max(axis=1) / scale

    dirs, xe, ve, je, jpe, err, res = shoot(r, ang)
    damp = np.ones(n)
    for _ in range(max_iter):
        if res.max() < tol:
            break
        nhat = metric.rotate90(xe, ve)
        det = ve[:, 0] * je * nhat[:, 1] - ve[:, 1] * je * nhat[:, 0]
        if np.any(np.abs(det) < 1e-13):
            raise DegenerateJacobianError(
                "singular shooting Jacobian (conjugate point on the segment?)"
            )
        # solve [ve, je*nhat] [dr, dang]^T = -err
        dr = (-err[:, 0] * je * nhat[:, 1] + err[:, 1] * je * nhat[:, 0]) / det
        dang = (-ve[:, 0] * err[:, 1] + ve[:, 1] * err[:, 0]) / det
        dr = np.clip(dr, -0.5 * (1.0 + r), 0.5 * (1.0 + r))
        dang = np.clip(dang, -0.4, 0.4)
        r_new = np.maximum(r + damp * dr, 1e-9)
        ang_new = ang + damp * dang
        out = shoot(r_new, ang_new)
        better = out[-1] <= res
        # backtrack rays whose residual worsened; re-grow damping elsewhere
        damp = np.where(better, np.minimum(1.0, 1.5 * damp), 0.5 * damp)
        r = np.where(better, r_new, r)
        ang = np.where(better, ang_new, ang)
        if better.any():
            dirs = np.where(better[:, None], out[0], dirs)
            xe = np.where(better[:, None], out[1], xe)
            ve = np.where(better[:, None], out[2], ve)
            je = np.where(better, out[3], je)
            jpe = np.where(better, out[4], jpe)
            err = np.where(better[:, None], out[5], err)
            res = np.where(better, out[6], res)
    else:
        raise NotConvergedError(
            "log map Newton did not reach %.1e (worst residual %.3e)"
            % (tol, float(res.max()))
        )
    res = float(res.max())
    return LogResult(
        r=r,
        angle=ang,
        dirs=dirs,
        end_x=xe,
        end_v=ve,
        jacobi=je,
        jacobi_p=jpe,
        residual=res,
    )


def geodesic_distance(metric, x, y, step=5e-3, tol=1e-10):
    """Geodesic distance between two chart points (simple metrics only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.hypot(*(x - y)) < 1e-12:
        return 0.0
    out = log_map(metric, y, x[None, :], step=step, tol=tol)
    return float(out.r[0])


def volume_element(metric, y, r, angle, step=5e-3, delta=1e-4):
    """Squared volume element alpha(r, angle) of geodesic polar coordinates.

    Computed from the exponential-map Jacobian: alpha = |d exp_y / d
    angle|_g^2 via a centered difference in the launch angle.  In the
    Euclidean case alpha = r^2.
    """
    y = np.asarray(y, dtype=float)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    angle = np.broadcast_to(np.asarray(angle, dtype=float), r.shape)
    inv_sqrt_cy = 1.0 / np.sqrt(metric.c(y[None, :])[0])
    ang = np.concatenate([angle + delta, angle - delta])
    rr = np.concatenate([r, r])
    dirs = inv_sqrt_cy * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    starts = np.broadcast_to(y, dirs.shape).copy()
    xe, _, _, _ = trace_to_lengths(metric, starts, dirs, rr, step=step)
    n = len(r)
    dxdang = (xe[:n] - xe[n:]) / (2.0 * delta)
    mid = 0.5 * (xe[:n] + xe[n:])
    alpha = metric.c(mid) * (dxdang * dxdang).sum(axis=1)
    floor = 1e-12 * np.maximum(r, 1e-6) ** 2
    if np.any(alpha <= floor):
        raise DegenerateJacobianError(
            "volume element vanished (conjugate point reached)"
        )
    return alpha


def volume_element_jacobi(metric, y, r, angle, step=5e-3):
    """alpha(r, angle) from the scalar Jacobi equation (oracle route)."""
    y = np.asarray(y, dtype=float)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    angle = np.broadcast_to(np.asarray(angle, dtype=float), r.shape)
    inv_sqrt_cy = 1.0 / np.sqrt(metric.c(y[None, :])[0])
    dirs = inv_sqrt_cy * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    starts = np.broadcast_to(y, dirs.shape).copy()
    _, _, j, _ = trace_to_lengths(metric, starts, dirs, r, step=step, want_jacobi=True)
    return j**2


# ---------------------------------------------------------------------------
# simplicity diagnostics
# ---------------------------------------------------------------------------


@dataclass
class SimplicityReport:
    """Diagnostics supporting (or refuting) simplicity of the disk."""

    is_simple: bool
    boundary_convexity_min: float
    min_jacobi_determinant: float
    exp_injectivity_defect: float
    notes: list = field(default_factory=list)


def simplicity_report(
    metric,
    radius=None,
    n_boundary=256,
    n_sources=16,
    n_directions=33,
    n_roundtrip=24,
    step=5e-3,
    seed=0,
):
    """Check strict boundary convexity, conjugate points, and exp injectivity.

    Convexity uses the geodesic curvature of the boundary circle under a
    conformal metric, kappa_g = (1/sqrt(c)) (1/R + dc/dr / (2c)).
    Conjugate points are flagged by sign changes of the scalar Jacobi
    field along a fan of inward geodesics.  Injectivity is probed by
    exp(log) round trips from boundary anchors to random interior points.
    """
    radius = metric.radii.M1 if radius is None else float(radius)
    notes = []

    beta = np.linspace(0, TWO_PI, n_boundary, endpoint=False)
    ring = boundary_point(radius, beta)
    c = metric.c(ring)
    gc = metric.grad_c(ring)
    rhat = ring / radius
    dcdr = (gc * rhat).sum(axis=1)
    kappa = (1.0 / np.sqrt(c)) * (1.0 / radius + dcdr / (2.0 * c))
    convexity_min = float(kappa.min())
    if convexity_min <= 0:
        notes.append("boundary circle is not strictly convex")

    src_beta = np.linspace(0, TWO_PI, n_sources, endpoint=False)
    gam = np.linspace(-0.45 * np.pi, 0.45 * np.pi, n_directions)
    bb, gg = np.meshgrid(src_beta, gam, indexing="ij")
    bb = bb.ravel()
    gg = gg.ravel()
    ys = boundary_point(radius, bb)
    ang = bb + np.pi + gg
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    res = trace_to_radius(
        metric, ys, dirs, radius, step=step, max_length=8 * radius, want_jacobi=True
    )
    if res.trapped.any():
        notes.append("%d fan geodesics trapped" % int(res.trapped.sum()))
    min_jacobi = float(np.min(res.min_jacobi))
    has_conjugate = bool(res.conjugate.any())
    if has_conjugate:
        notes.append("conjugate points detected along the fan")

    rng = np.random.default_rng(seed)
    defect = 0.0
    if not has_conjugate and not res.trapped.any():
        anchors = boundary_point(radius, rng.uniform(0, TWO_PI, size=3))
        rr = np.sqrt(rng.uniform(0.0, 1.0, size=n_roundtrip)) * 0.8 * metric.radii.M
        tt = rng.uniform(0, TWO_PI, size=n_roundtrip)
        pts = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=1)
        for y in anchors:
            try:
                lg = log_map(metric, y, pts, step=step)
            except (NotConvergedError, DegenerateJacobianError) as exc:
                notes.append("log map failed from an anchor: %s" % exc)
                defect = np.inf
                break
            back = exp_map(metric, y, lg.tangent(), step=step)
            defect = max(defect, float(np.abs(back - pts).max()))
    else:
        defect = np.inf

    is_simple = (
        convexity_min > 0
        and not has_conjugate
        and not res.trapped.any()
        and defect < 1e-6
    )
    return SimplicityReport(
        is_simple=is_simple,
        boundary_convexity_min=convexity_min,
        min_jacobi_determinant=min_jacobi,
        exp_injectivity_defect=defect,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# node-centered disk grid and discrete operators
# ---------------------------------------------------------------------------


class WaveGrid:
    """Node-centered polar grid on the disk of `radius`.

    Degrees of freedom are ordered [center, ring 1, ..., ring nr], each
    ring carrying ntheta equispaced nodes; ring nr lies exactly on the
    boundary circle and holds Dirichlet data.
    """

    def __init__(self, radius, nr, ntheta):
        if nr < 3 or ntheta < 8:
            raise ValueError("wave grid needs nr >= 3 and ntheta >= 8")
        self.radius = float(radius)
        self.nr = int(nr)
        self.ntheta = int(ntheta)
        self.h = self.radius / self.nr
        self.dtheta = TWO_PI / self.ntheta
        self.r = np.arange(1, self.nr + 1) * self.h
        self.theta = np.arange(self.ntheta) * self.dtheta
        self.n_full = 1 + self.nr * self.ntheta
        self.n_int = 1 + (self.nr - 1) * self.ntheta

    def ring_index(self, i, j):
        """Flat index of ring i (1-based) node j."""
        return 1 + (i - 1) * self.ntheta + np.mod(j, self.ntheta)

    @property
    def boundary_slice(self):
        return slice(self.n_full - self.ntheta, self.n_full)

    def nodes_xy(self):
        out = np.zeros((self.n_full, 2))
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        out[1:, 0] = (rr * np.cos(tt)).ravel()
        out[1:, 1] = (rr * np.sin(tt)).ravel()
        return out

    def min_spacing(self):
        return min(self.h, self.h * self.dtheta)


class DiskOperators:
    """Discrete metric Laplacian, gradient, and quadrature on a WaveGrid.

    The Laplacian is assembled in flux form on polar cells.  For a
    conformal metric the face coefficients reduce to their Euclidean
    values and the factor enters only through 1/c at the node and the
    cell volumes, which keeps the operator exactly symmetric with respect
    to the volume weights.  The center node is advanced by the flux
    average over the innermost ring (a small-patch average that removes
    the r = 0 coordinate singularity).
    """

    def __init__(self, metric, grid):
        import scipy.sparse as sp

        self.metric = metric
        self.grid = grid
        g = grid
        xy = g.nodes_xy()
        self.nodes = xy
        self.cvals = metric.c(xy)
        h, dth = g.h, g.dtheta
        nt = g.ntheta

        vol = np.zeros(g.n_full)
        vol[0] = self.cvals[0] * np.pi * (h / 2.0) ** 2
        rr = np.repeat(g.r, nt)
        vol[1:] = self.cvals[1:] * rr * h * dth
        self.volumes = vol
        quad = vol.copy()
        quad[g.boundary_slice] *= 0.5
        self.quad_weights = quad

        rows, cols, vals = [], [], []

        def add(r_, c_, v_):
            rows.append(r_)
            cols.append(c_)
            vals.append(v_)

        # center row: (4 / (h^2 c0)) * (mean over ring 1 - center)
        coef = 4.0 / (h**2 * self.cvals[0])
        for jj in range(nt):
            add(0, int(g.ring_index(1, jj)), coef / nt)
        add(0, 0, -coef)

        jidx = np.arange(nt)
        for i in range(1, g.nr):
            ri = g.r[i - 1]
            rp = ri + 0.5 * h
            rm = ri - 0.5 * h
            me = g.ring_index(i, jidx)
            up = g.ring_index(i + 1, jidx)
            dn = g.ring_index(i - 1, jidx) if i > 1 else np.zeros(nt, dtype=int)
            lf = g.ring_index(i, jidx - 1)
            rt = g.ring_index(i, jidx + 1)
            cme = self.cvals[me]
            rad = 1.0 / (h**2 * ri * cme)
            ang = 1.0 / (ri**2 * dth**2 * cme)
            for a, b, w in (
                (me, up, rp * rad),
                (me, dn, rm * rad),
                (me, lf, ang),
                (me, rt, ang),
                (me, me, -(rp + rm) * rad - 2.0 * ang),
            ):
                rows.extend(a.tolist() if hasattr(a, "tolist") else [a] * nt)
                cols.extend(b.tolist())
                vals.extend(np.broadcast_to(w, (nt,)).tolist())

        self.laplacian = sp.csr_matrix(
            (vals, (rows, cols)), shape=(g.n_int, g.n_full)
        )
        vi = self.volumes[: g.n_int]
        stiff = -sp.diags(vi) @ self.laplacian
        self.stiffness_int = sp.csc_matrix(stiff[:, : g.n_int])
        self.stiffness_bnd = sp.csc_matrix(stiff[:, g.n_int :])
        self.mass_int = vi

        bidx = np.arange(g.n_full - nt, g.n_full)
        self.c_boundary = self.cvals[bidx]
        self.ds_boundary = np.sqrt(self.c_boundary) * g.radius * dth

    def laplace(self, u_full):
        """Metric Laplacian on interior dofs (vector of length n_int)."""
        return self.laplacian @ u_full

    def neumann_trace(self, u_full):
        """Outward unit-normal derivative on the boundary ring (3-point)."""
        g = self.grid
        nt = g.ntheta
        ub = u_full[..., g.n_full - nt : g.n_full]
        u1 = u_full[..., g.n_full - 2 * nt : g.n_full - nt]
        u2 = u_full[..., g.n_full - 3 * nt : g.n_full - 2 * nt]
        return (3.0 * ub - 4.0 * u1 + u2) / (2.0 * g.h * np.sqrt(self.c_boundary))

    def gradient_polar(self, u_full):
        """Centered (d/dr, d/dtheta) on rings 1..nr; one-sided radially at
        the boundary ring; ring 1 uses the center node inward."""
        g = self.grid
        nt = g.ntheta
        rings = u_full[1:].reshape(g.nr, nt)
        dr = np.empty_like(rings)
        ctr = u_full[0]
        inner = np.vstack([np.full(nt, ctr), rings[:-1]])
        outer = np.vstack([rings[1:], rings[-1:]])
        dr[:-1] = (outer[:-1] - inner[:-1]) / (2.0 * g.h)
        dr[-1] = (3.0 * rings[-1] - 4.0 * rings[-2] + rings[-3]) / (2.0 * g.h)
        dth = (np.roll(rings, -1, axis=1) - np.roll(rings, 1, axis=1)) / (
            2.0 * g.dtheta
        )
        return dr, dth

    def grad_inner(self, u_full, w_full):
        """Pointwise <grad u, grad w>_g on rings (shape (nr, ntheta))."""
        dur, dut = self.gradient_polar(u_full)
        dwr, dwt = self.gradient_polar(w_full)
        g = self.grid
        cring = self.cvals[1:].reshape(g.nr, g.ntheta)
        r2 = (g.r**2)[:, None]
        return (dur * np.conj(dwr) + dut * np.conj(dwt) / r2) / cring

    def energy_inner(self, u_full, w_full):
        """Dirichlet energy integral over the disk (ring quadrature)."""
        g = self.grid
        dots = self.grad_inner(u_full, w_full)
        wq = self.quad_weights[1:].reshape(g.nr, g.ntheta)
        return (dots * wq).sum()

    def integrate(self, vals_full):
        return (vals_full * self.quad_weights).sum()

    def divergence(self, fr, ft):
        """div_g of a contravariant polar field sampled on rings.

        fr, ft have shape (nr, ntheta); returns the divergence on rings
        2..nr-1 (centered differences).  Used by the Green/divergence
        checks rather than the PDE solvers.
        """
        g = self.grid
        cring = self.cvals[1:].reshape(g.nr, g.ntheta)
        r = g.r[:, None]
        a = cring * r * fr
        b = cring * r * ft
        da = np.empty_like(a)
        da[1:-1] = (a[2:] - a[:-2]) / (2 * g.h)
        da[0] = (a[1] - a[0]) / g.h
        da[-1] = (a[-1] - a[-2]) / g.h
        db = (np.roll(b, -1, axis=1) - np.roll(b, 1, axis=1)) / (2 * g.dtheta)
        return (da + db) / (cring * r)

    def green_identity_defect(self, w_field, f_field):
        """| (lap_g w, f) + (grad w, grad f)_g - (d_nu w, f)_boundary |.

        w_field and f_field are smooth field objects with analytic grad
        and hess (families module); the check then isolates the grid
        quadrature and boundary trace, which is what calibrates every
        pairing in the package.  For a conformal metric lap_g = lap / c
        and <grad u, grad v>_g = (grad u . grad v) / c.
        """
        g = self.grid
        xy = self.nodes
        c = self.cvals
        ww = w_field(xy)
        ff = f_field(xy)
        gw = w_field.grad(xy)
        gf = f_field.grad(xy)
        hw = w_field.hess(xy)
        lap_g = (hw[:, 0, 0] + hw[:, 1, 1]) / c
        a = (lap_g * ff * self.quad_weights).sum()
        b = (((gw * gf).sum(axis=1) / c) * self.quad_weights).sum()
        bidx = np.arange(g.n_full - g.ntheta, g.n_full)
        rhat = xy[bidx] / g.radius
        dnu = (gw[bidx] * rhat).sum(axis=1) / np.sqrt(c[bidx])
        s = (dnu * ff[bidx] * self.ds_boundary).sum()
        # scale by ||w||_H2 * ||f||_H1: the identity pairs two derivatives
        # of w against one of f, so this is the scale-correct norm product
        qw = self.quad_weights
        wn = np.sqrt(
            (ww**2 * qw).sum()
            + (((gw * gw).sum(axis=1) / c) * qw).sum()
            + (lap_g**2 * qw).sum()
        )
        fn = np.sqrt(
            (ff**2 * qw).sum() + (((gf * gf).sum(axis=1) / c) * qw).sum()
        )
        return abs(a + b - s) / max(wn * fn, 1e-300)

    def green_identity_defect_discrete(self, w_full, f_full):
        """Same identity on raw node vectors via the discrete operators.

        The flux-form Laplacian's natural trace lives half a cell inside
        the node trace, so this defect is first order in h; it is tracked
        as a decreasing diagnostic, not an accuracy gate.
        """
        g = self.grid
        lw = np.zeros(g.n_full)
        lw[: g.n_int] = self.laplace(w_full)
        a = (lw * f_full * self.quad_weights).sum()
        b = self.energy_inner(w_full, f_full)
        tr = self.neumann_trace(w_full)
        fb = f_full[g.boundary_slice]
        c = (tr * fb * self.ds_boundary).sum()
        return abs(a + b - c)
