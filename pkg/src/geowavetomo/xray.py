"""Geodesic ray transform on the extended disk, its adjoint, and inversion.

Rays are parametrized fan-beam style by (beta, gamma): beta the boundary
angle on the circle of radius M1, gamma the signed aperture from the
inward normal, with the transform measure weight mu = cos(gamma).

Two adjoint routes coexist deliberately:

- `normal_operator` uses the exact transpose of the sparse ray-sampling
  matrix, so the pairing <If, psi>_mu = <f, I* psi> holds to machine
  precision and I*I is exactly positive semidefinite in the volume inner
  product.  This is the route the reconstruction pipelines consume.
- `adjoint_transform` backprojects geometrically (per-node angular
  quadrature with backward tracing), an independent discretization used
  to cross-check the transpose route at quadrature accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NotConvergedError, TrappedGeodesicError
from .fields import PolarGrid, ScalarField
from .geometry import aperture_angle, boundary_point, trace_to_radius

TWO_PI = 2.0 * np.pi


class FanBeamGrid:
    """Equispaced boundary angles x Gauss-Legendre aperture nodes.

    The aperture band (-gamma_max, gamma_max) is chosen to cover every ray
    that meets the disk of `support_radius` (plus a margin), so restricting
    it loses nothing for compactly supported integrands while keeping all
    quadrature nodes away from the grazing directions where mu -> 0.

    Odd `n_gamma` is preferred: an odd Gauss-Legendre rule places a node
    at zero aperture, so every boundary angle contributes an exact
    diameter and the centre of the disk is sampled by rays rather than
    only through interpolation stencils.
    """

    def __init__(
        self,
        n_beta=96,
        n_gamma=33,
        radius=1.15,
        support_radius=1.0,
        margin=0.05,
    ):
        self.n_beta = int(n_beta)
        self.n_gamma = int(n_gamma)
        self.radius = float(radius)
        self.support_radius = float(support_radius)
        self.margin = float(margin)
        self.gamma_max = np.arcsin(
            min(1.0, (self.support_radius + self.margin) / self.radius)
        )
        self.betas = np.arange(self.n_beta) * TWO_PI / self.n_beta
        nodes, weights = np.polynomial.legendre.leggauss(self.n_gamma)
        self.gammas = nodes * self.gamma_max
        self.gamma_weights = weights * self.gamma_max
        self.mu = np.cos(self.gammas)
        self.d_beta = TWO_PI / self.n_beta

    @property
    def n_rays(self):
        return self.n_beta * self.n_gamma

    def ray_starts_dirs(self):
        """Start points and inward unit directions for all (beta, gamma)."""
        bb = np.repeat(self.betas, self.n_gamma)
        gg = np.tile(self.gammas, self.n_beta)
        starts = boundary_point(self.radius, bb)
        ang = bb + np.pi + gg
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return starts, dirs

    def ray_weights(self):
        """L2_mu quadrature weight per ray: ds(beta) * w_gl * mu."""
        w = self.radius * self.d_beta * self.gamma_weights * self.mu
        return np.tile(w, self.n_beta)

    def geometry_key(self):
        return (
            self.n_beta,
            self.n_gamma,
            self.radius,
            self.support_radius,
            self.margin,
        )


@dataclass
class RayData:
    """Fan-beam samples of a ray transform."""

    grid: FanBeamGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_beta, self.grid.n_gamma):
            raise ValueError("RayData values must have shape (n_beta, n_gamma)")
        if not np.isfinite(self.values).all():
            raise ValueError("RayData values must be finite")

    def norm_mu(self):
        w = self.grid.ray_weights().reshape(self.grid.n_beta, self.grid.n_gamma)
        return float(np.sqrt((self.values**2 * w).sum()))

    def inner_mu(self, other):
        w = self.grid.ray_weights().reshape(self.grid.n_beta, self.grid.n_gamma)
        return float((self.values * other.values * w).sum())

    def to_csv(self, path):
        g = self.grid
        bb = np.repeat(g.betas, g.n_gamma)
        gg = np.tile(g.gammas, g.n_beta)
        mm = np.tile(g.mu, g.n_beta)
        arr = np.column_stack([bb, gg, mm, self.values.ravel()])
        np.savetxt(
            path, arr, delimiter=",", header="beta,gamma,mu,value", comments="",
            fmt="%.17g",
        )

    @classmethod
    def from_csv(cls, path, grid):
        raw = np.loadtxt(path, delimiter=",", skiprows=1)
        if raw.shape[0] != grid.n_beta * grid.n_gamma:
            raise ValueError("ray-data CSV row count does not match the fan grid")
        if not np.allclose(raw[:, 0], np.repeat(grid.betas, grid.n_gamma)) or not np.allclose(
            raw[:, 1], np.tile(grid.gammas, grid.n_beta)
        ):
            raise ValueError("ray-data CSV coordinates do not match the fan grid")
        return cls(grid, raw[:, 3].reshape(grid.n_beta, grid.n_gamma))


class RayBundle:
    """Traced fan rays with a cached sparse sampling matrix.

    Row r of the matrix integrates a field along ray r by composite
    midpoint quadrature at arclength step `step_factor` x (radial grid
    spacing), with bilinear interpolation weights on the polar raster.
    """

    def __init__(self, metric, fan_grid, field_grid, step_factor=0.5):
        self.metric = metric
        self.fan_grid = fan_grid
        self.field_grid = field_grid
        self.step = step_factor * field_grid.h
        starts, dirs = fan_grid.ray_starts_dirs()
        res = trace_to_radius(
            metric,
            starts,
            dirs,
            fan_grid.radius,
            step=self.step,
            max_length=8.0 * fan_grid.radius,
            record=True,
        )
        if res.trapped.any():
            raise TrappedGeodesicError(
                "%d fan rays failed to exit" % int(res.trapped.sum())
            )
        self.exit_t = res.exit_t
        n_rays = fan_grid.n_rays
        rows, cols, vals = [], [], []
        nsteps = res.samples_x.shape[0] - 1
        ray_ids = np.arange(n_rays)
        for k in range(nsteps):
            live = res.n_samples > k + 1
            if not live.any():
                break
            mids = 0.5 * (res.samples_x[k] + res.samples_x[k + 1])
            w_len = np.full(n_rays, self.step)
            # rays ending inside this step get the partial-interval weight
            closing = res.n_samples == k + 2
            if closing.any():
                mids[closing] = 0.5 * (
                    res.samples_x[k][closing] + res.exit_x[closing]
                )
                w_len[closing] = res.exit_t[closing] - k * self.step
            idx, w = field_grid.interp_weights(mids[live])
            rows.append(np.repeat(ray_ids[live], 4))
            cols.append(idx.ravel())
            vals.append((w * w_len[live][:, None]).ravel())
        self.matrix = sp.csr_matrix(
            (
                np.concatenate(vals),
                (np.concatenate(rows), np.concatenate(cols)),
            ),
            shape=(n_rays, field_grid.nr * field_grid.ntheta),
        )
        self.ray_w = fan_grid.ray_weights()
        self.volumes = field_grid.cell_volumes(metric).ravel()

    def forward(self, values_flat):
        return self.matrix @ values_flat

    def transpose_adjoint(self, ray_values_flat):
        """Exact-transpose adjoint in the L2(volume) / L2_mu duality."""
        return (self.matrix.T @ (self.ray_w * ray_values_flat)) / self.volumes

    def normal_apply(self, values_flat):
        return self.transpose_adjoint(self.matrix @ values_flat)

    def dense_normal(self):
        """Dense I*I assembly for oracle tests (small grids only)."""
        a = self.matrix.toarray()
        return (a.T * self.ray_w) @ a / self.volumes[:, None]


_BUNDLES = {}


def get_bundle(metric, fan_grid, field_grid, step_factor=0.5):
    key = (
        id(metric),
        fan_grid.geometry_key(),
        (field_grid.radius, field_grid.nr, field_grid.ntheta),
        step_factor,
    )
    if key not in _BUNDLES:
        _BUNDLES[key] = RayBundle(metric, fan_grid, field_grid, step_factor)
    return _BUNDLES[key]


def ray_transform(metric, f: ScalarField, grid: FanBeamGrid) -> RayData:
    """Geodesic ray transform of a scalar field over the fan grid."""
    bundle = get_bundle(metric, grid, f.grid)
    vals = bundle.forward(f.values.ravel())
    return RayData(grid, vals.reshape(grid.n_beta, grid.n_gamma))


def adjoint_transform(
    metric, psi: RayData, field_grid: PolarGrid, n_directions=256
) -> ScalarField:
    """Geometric backprojection I* psi by per-node angular quadrature.

    For each node x and each of n_directions equispaced tangent angles,
    trace backward to the fan circle, read psi at the entry coordinates
    (cubic in beta, polynomial across the Gauss-Legendre gamma nodes),
    and average over the angular circle (the conformal unit tangent
    circle carries the uniform angle measure).  Directions whose entry
    aperture falls outside the tabulated band contribute zero.
    Directions are traced in batches to amortise the integrator cost.
    """
    g = psi.grid
    nodes = field_grid.nodes_xy()
    n_nodes = nodes.shape[0]
    phis = np.arange(n_directions) * TWO_PI / n_directions
    out = np.zeros(n_nodes)
    inv_sqrt_c = 1.0 / np.sqrt(metric.c(nodes))

    # barycentric weights for polynomial interpolation on the gamma nodes
    diffs = g.gammas[:, None] - g.gammas[None, :]
    np.fill_diagonal(diffs, 1.0)
    bary_w = 1.0 / diffs.prod(axis=1)

    def interp_entry(beta, gamma, values):
        # cubic (Catmull-Rom) in the periodic beta direction
        u = beta / g.d_beta
        i1 = np.floor(u).astype(int) % g.n_beta
        t = (u - np.floor(u))[:, None]
        rows = [values[(i1 + k - 1) % g.n_beta] for k in range(4)]
        t2, t3 = t * t, t * t * t
        row = 0.5 * (
            (2 * rows[1])
            + (-rows[0] + rows[2]) * t
            + (2 * rows[0] - 5 * rows[1] + 4 * rows[2] - rows[3]) * t2
            + (-rows[0] + 3 * rows[1] - 3 * rows[2] + rows[3]) * t3
        )
        # barycentric Lagrange across the aperture nodes
        dg = gamma[:, None] - g.gammas[None, :]
        hit = np.isclose(dg, 0.0, atol=1e-14)
        dg = np.where(hit, 1.0, dg)
        k = bary_w[None, :] / dg
        val = (k * row).sum(axis=1) / k.sum(axis=1)
        hit_any = hit.any(axis=1)
        if hit_any.any():
            val[hit_any] = row[hit_any, hit.argmax(axis=1)[hit_any]]
        return val

    chunk = 16
    for lo in range(0, n_directions, chunk):
        phi = phis[lo : lo + chunk]
        cos_s = np.cos(phi)[None, :] * inv_sqrt_c[:, None]
        sin_s = np.sin(phi)[None, :] * inv_sqrt_c[:, None]
        d = np.stack([cos_s.ravel(), sin_s.ravel()], axis=1)
        starts = np.repeat(nodes, len(phi), axis=0)
        res = trace_to_radius(
            metric, starts, -d, g.radius, step=2.0 * field_grid.h
        )
        if res.trapped.any():
            raise TrappedGeodesicError("backward trace trapped")
        y = res.exit_x
        v_in = -res.exit_v
        beta = np.mod(np.arctan2(y[:, 1], y[:, 0]), TWO_PI)
        gamma = aperture_angle(y, v_in)
        contrib = interp_entry(beta, gamma, psi.values)
        inside = np.abs(gamma) <= g.gamma_max
        out += np.where(inside, contrib, 0.0).reshape(n_nodes, len(phi)).sum(axis=1)
    out *= TWO_PI / n_directions
    return ScalarField(field_grid, out.reshape(field_grid.nr, field_grid.ntheta))


def normal_operator(metric, f: ScalarField, grid: FanBeamGrid) -> ScalarField:
    """I*I f via the exact-transpose route (volume-weighted adjoint)."""
    bundle = get_bundle(metric, grid, f.grid)
    out = bundle.normal_apply(f.values.ravel())
    return ScalarField(
        f.grid, out.reshape(f.grid.nr, f.grid.ntheta), support_radius=None
    )


@dataclass
class InversionResult:
    """CG inversion output with residual history."""

    field: ScalarField
    residuals: list
    converged: bool
    lambda_reg: float
    iterations: int = 0

    def __post_init__(self):
        self.iterations = len(self.residuals)


def invert_normal(
    metric,
    data: ScalarField,
    grid: FanBeamGrid,
    tol=1e-8,
    max_iter=500,
    lambda_reg=None,
    support_radius=1.0,
) -> InversionResult:
    """Solve (I*I + lambda) f = data by CG in the volume inner product.

    The iterate is confined to nodes inside `support_radius` (the
    integrand is known to be supported in the inner disk).  If the
    residual fails to reach tol, the best iterate is returned flagged
    rather than raised, so pipelines can act on partial results.
    """
    bundle = get_bundle(metric, grid, data.grid)
    vol = bundle.volumes
    mask = np.repeat(
        (data.grid.r <= support_radius).astype(float), data.grid.ntheta
    )
    b = data.values.ravel() * mask
    data_norm = np.sqrt((b * b * vol).sum())
    if lambda_reg is None:
        lambda_reg = 1e-6 * data_norm

    # Per-coefficient Tikhonov: the penalty density lambda*vbar/vol equals
    # lambda at an average-sized cell but grows where cells shrink, so the
    # tiny near-center cells (which few rays resolve) cannot host noise
    # spikes that a volume-weighted penalty would leave almost free.
    penalty = lambda_reg * vol.mean() / vol

    def apply(v):
        return mask * bundle.normal_apply(v * mask) + penalty * v

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = (r * r * vol).sum()
    b_norm = max(np.sqrt(rs), 1e-300)
    residuals = [1.0]
    converged = False
    for _ in range(max_iter):
        ap = apply(p)
        denom = (p * ap * vol).sum()
        if denom <= 0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = (r * r * vol).sum()
        residuals.append(float(np.sqrt(rs_new) / b_norm))
        if residuals[-1] < tol:
            converged = True
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    out = ScalarField(
        data.grid,
        (x * mask).reshape(data.grid.nr, data.grid.ntheta),
        support_radius=support_radius,
    )
    return InversionResult(
        field=out,
        residuals=residuals,
        converged=converged,
        lambda_reg=float(lambda_reg),
    )
