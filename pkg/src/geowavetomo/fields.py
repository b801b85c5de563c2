"""Polar rasters and sampled scalar fields.

The transform modules tabulate functions on a cell-centered polar raster
over the extended disk: rings at r_i = (i + 1/2) * h for i = 0..nr-1 and
equispaced angles theta_j = 2*pi*j/ntheta.  Cell centering avoids the
coordinate singularity at r = 0 entirely; queries below the first ring are
clamped to it, which costs O(h^2) on smooth fields.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


class PolarGrid:
    """Cell-centered polar raster on the disk of a given radius."""

    def __init__(self, radius, nr, ntheta):
        if nr < 2 or ntheta < 4:
            raise ValueError("polar raster needs nr >= 2 and ntheta >= 4")
        self.radius = float(radius)
        self.nr = int(nr)
        self.ntheta = int(ntheta)
        self.h = self.radius / self.nr
        self.dtheta = TWO_PI / self.ntheta
        self.r = (np.arange(self.nr) + 0.5) * self.h
        self.theta = np.arange(self.ntheta) * self.dtheta

    @property
    def shape(self):
        return (self.nr, self.ntheta)

    def nodes_xy(self):
        """Chart coordinates of all raster nodes, shape (nr*ntheta, 2)."""
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        return np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)

    def cell_volumes(self, metric=None):
        """Riemannian cell volumes, shape (nr, ntheta)."""
        base = np.broadcast_to((self.r * self.h * self.dtheta)[:, None], self.shape)
        if metric is None:
            return base.copy()
        c = metric.sqrt_det(self.nodes_xy()).reshape(self.shape)
        return base * c

    def interp_weights(self, pts):
        """Bilinear interpolation stencils for chart points.

        Returns (idx, w): integer array (N, 4) of flat node indices and
        weights (N, 4).  Radial queries are clamped to [r_0, r_{nr-1}];
        the angle wraps periodically.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
        s = np.clip(r / self.h - 0.5, 0.0, self.nr - 1.0)
        i0 = np.clip(np.floor(s).astype(int), 0, self.nr - 2)
        fr = np.clip(s - i0, 0.0, 1.0)
        u = th / self.dtheta
        j0 = np.floor(u).astype(int) % self.ntheta
        ft = u - np.floor(u)
        j1 = (j0 + 1) % self.ntheta
        nt = self.ntheta
        idx = np.stack(
            [i0 * nt + j0, i0 * nt + j1, (i0 + 1) * nt + j0, (i0 + 1) * nt + j1],
            axis=1,
        )
        w = np.stack(
            [(1 - fr) * (1 - ft), (1 - fr) * ft, fr * (1 - ft), fr * ft], axis=1
        )
        return idx, w


class ScalarField:
    """Function samples on a PolarGrid, with bilinear point evaluation."""

    def __init__(self, grid, values, support_radius=None):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError("field values must match the grid shape")
        self.grid = grid
        self.values = values
        self.support_radius = (
            grid.radius if support_radius is None else float(support_radius)
        )

    @classmethod
    def from_function(cls, grid, fn, support_radius=None):
        vals = fn(grid.nodes_xy()).reshape(grid.shape)
        return cls(grid, vals, support_radius=support_radius)

    def sample(self, pts):
        """Bilinear evaluation at chart points; zero outside the support."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx, w = self.grid.interp_weights(pts)
        out = (self.values.ravel()[idx] * w).sum(axis=1)
        r = np.hypot(pts[:, 0], pts[:, 1])
        out[r > self.support_radius] = 0.0
        return out

    def norm_l2(self, metric=None):
        vol = self.grid.cell_volumes(metric)
        return float(np.sqrt((self.values**2 * vol).sum()))

    def inner(self, other, metric=None):
        vol = self.grid.cell_volumes(metric)
        return float((self.values * other.values * vol).sum())

    def to_csv(self, path):
        rr, tt = np.meshgrid(self.grid.r, self.grid.theta, indexing="ij")
        table = np.column_stack([rr.ravel(), tt.ravel(), self.values.ravel()])
        np.savetxt(
            path, table, fmt="%.17g", delimiter=",", header="r,theta,value", comments=""
        )

    @classmethod
    def from_csv(cls, path, support_radius=None):
        raw = np.loadtxt(path, delimiter=",", skiprows=1)
        r = np.unique(raw[:, 0])
        th = np.unique(raw[:, 1])
        nr, ntheta = len(r), len(th)
        if nr * ntheta != raw.shape[0]:
            raise ValueError("scalar-field CSV must cover a full polar raster")
        h = r[0] * 2.0
        grid = PolarGrid(radius=h * nr, nr=nr, ntheta=ntheta)
        if not np.allclose(grid.r, r, rtol=0, atol=1e-12 * max(1.0, r[-1])):
            raise ValueError("scalar-field CSV radii are not cell-centered")
        vals = raw[:, 2].reshape(nr, ntheta)
        return cls(grid, vals, support_radius=support_radius)


def relative_l2_error(recon, truth, metric=None):
    """Relative L2 error of a reconstructed field against the truth."""
    vol = truth.grid.cell_volumes(metric)
    num = np.sqrt(((recon.values - truth.values) ** 2 * vol).sum())
    den = np.sqrt((truth.values**2 * vol).sum())
    return float(num / den)
