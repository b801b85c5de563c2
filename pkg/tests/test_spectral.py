"""Tests for boundary spectral data, the elliptic DtN family, and the
spectral-series hyperbolic DtN."""

import warnings

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy.special import jn_zeros

from geowavetomo.errors import (
    InsufficientSmoothnessError,
    ResolutionViolationError,
    ResolventPoleError,
    TruncationWarning,
)
from geowavetomo.families import ConstantField, OnePlus, RadialBump
from geowavetomo.geometry import ConformalMetric, WaveGrid
from geowavetomo.spectral import (
    BoundarySpectralData,
    adjudicate_series_form,
    dtn_from_spectral,
    eigensolve,
    elliptic_dtn,
    elliptic_dtn_derivative,
    elliptic_field_series,
    elliptic_trace_series,
    normal_derivative_growth,
    polynomial_signal,
    solve_elliptic,
    spectral_distance,
    t_power_ramp_signal,
    weyl_fit,
)
from geowavetomo.wave import BoundarySignal, DtNOperator

LAMBDA_1 = jn_zeros(0, 1)[0] ** 2  # first Dirichlet eigenvalue of the unit disk


def _flat_metric():
    return ConformalMetric(OnePlus(ConstantField(0.0)))


def _curved_metric():
    return ConformalMetric(
        OnePlus(RadialBump(center=(0.18, -0.1), amplitude=0.3, width=0.55))
    )


def _qbump():
    return RadialBump(center=(-0.2, 0.25), amplitude=1.5, width=0.6)


@pytest.fixture(scope="module")
def fine_data():
    grid = WaveGrid(radius=1.0, nr=48, ntheta=96)
    return eigensolve(_flat_metric(), None, 120, grid=grid)


@pytest.fixture(scope="module")
def mid_grid():
    return WaveGrid(radius=1.0, nr=32, ntheta=64)


def test_lowest_eigenvalue_matches_bessel_root():
    grid = WaveGrid(radius=1.0, nr=24, ntheta=48)
    data = eigensolve(_flat_metric(), None, 8, grid=grid)
    assert abs(data.eigenvalues[0] - LAMBDA_1) / LAMBDA_1 < 1e-2


def test_constant_shift_is_exact(mid_grid):
    base = eigensolve(_flat_metric(), None, 40, grid=mid_grid)
    kappa = 0.8
    shifted = eigensolve(_flat_metric(), ConstantField(kappa), 40, grid=mid_grid)
    assert np.abs(shifted.eigenvalues - base.eigenvalues - kappa).max() < 1e-9


def test_eigenbasis_is_volume_orthonormal(fine_data):
    vol = fine_data.ops.mass_int
    gram = fine_data.fields @ (vol[:, None] * fine_data.fields.T)
    assert np.abs(gram - np.eye(fine_data.truncation)).max() < 1e-8


def test_eigensolve_is_deterministic(mid_grid):
    a = eigensolve(_flat_metric(), _qbump(), 24, grid=mid_grid)
    b = eigensolve(_flat_metric(), _qbump(), 24, grid=mid_grid)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.normal_derivatives, b.normal_derivatives)


def test_unresolvable_truncation_raises():
    grid = WaveGrid(radius=1.0, nr=24, ntheta=48)
    with pytest.raises(ResolutionViolationError):
        eigensolve(_flat_metric(), None, 60, grid=grid)


def test_weyl_slope_in_band_and_stable(fine_data):
    fit = weyl_fit(fine_data)
    assert 0.9 < fit.slope < 1.1
    half = weyl_fit(fine_data.truncated(60))
    assert abs(fit.slope - half.slope) < 0.05
    # flux norms may grow no faster than k^{2/n} = k
    assert normal_derivative_growth(fine_data) < 1.1


def test_csv_roundtrip(tmp_path, mid_grid):
    data = eigensolve(_flat_metric(), _qbump(), 16, grid=mid_grid)
    path = tmp_path / "spectral.csv"
    data.to_csv(path)
    back = BoundarySpectralData.from_csv(path, angles=data.angles)
    assert np.allclose(back.eigenvalues, data.eigenvalues, rtol=1e-15, atol=0.0)
    assert np.allclose(
        back.normal_derivatives, data.normal_derivatives, rtol=1e-15, atol=1e-300
    )
    assert np.allclose(back.weights, data.weights)
    with pytest.raises(ValueError):
        elliptic_dtn(back, 0.0, np.cos(back.angles))


def test_distance_identity_and_constant_shift(mid_grid):
    base = eigensolve(_flat_metric(), None, 48, grid=mid_grid)
    assert spectral_distance(base, base) == 0.0
    kappa = 0.8
    shifted = eigensolve(_flat_metric(), ConstantField(kappa), 48, grid=mid_grid)
    eps = spectral_distance(base, shifted)
    predicted = kappa * base.weights.sum()
    assert abs(eps - predicted) / predicted < 1e-6


def test_distance_metric_properties(mid_grid):
    qa = None
    qb = RadialBump(center=(0.0, 0.0), amplitude=1.0, width=0.5)
    qc = RadialBump(center=(0.0, 0.0), amplitude=2.0, width=0.7)
    da = eigensolve(_flat_metric(), qa, 48, grid=mid_grid)
    db = eigensolve(_flat_metric(), qb, 48, grid=mid_grid)
    dc = eigensolve(_flat_metric(), qc, 48, grid=mid_grid)
    d12 = spectral_distance(da, db)
    assert d12 > 0.0
    assert spectral_distance(db, da) == d12
    d23 = spectral_distance(db, dc)
    d13 = spectral_distance(da, dc)
    assert d13 <= (d12 + d23) * (1.0 + 1e-12)


def test_distance_monotone_in_bump_height_with_power_law(mid_grid):
    base = eigensolve(_flat_metric(), None, 48, grid=mid_grid)
    xy = base.ops.nodes[: mid_grid.n_int]
    vol = base.ops.mass_int
    eps, qnorm = [], []
    for height in (0.25, 0.5, 1.0, 2.0, 4.0):
        q = RadialBump(center=(0.1, 0.0), amplitude=height, width=0.55)
        data = eigensolve(_flat_metric(), q, 48, grid=mid_grid)
        eps.append(spectral_distance(base, data))
        qnorm.append(np.sqrt((q(xy) ** 2 * vol).sum()))
    eps = np.array(eps)
    assert np.all(np.diff(eps) > 0.0)
    coef = np.polynomial.polynomial.polyfit(np.log(qnorm), np.log(eps), 1)
    resid = np.log(eps) - (coef[0] + coef[1] * np.log(qnorm))
    r_sq = 1.0 - (resid**2).sum() / ((np.log(eps) - np.log(eps).mean()) ** 2).sum()
    assert coef[1] > 0.0
    assert r_sq > 0.9


def test_eigenvalues_interlace_under_potential_increase(mid_grid):
    base = eigensolve(_flat_metric(), None, 48, grid=mid_grid)
    bumped = eigensolve(
        _flat_metric(),
        RadialBump(center=(0.0, 0.0), amplitude=1.0, width=0.5),
        48,
        grid=mid_grid,
    )
    assert (bumped.eigenvalues - base.eigenvalues).min() > -1e-9


def test_weighted_flux_norms_are_summable(fine_data):
    norms = np.sqrt(
        (fine_data.normal_derivatives**2).sum(axis=1) * fine_data.dbeta
    )
    partial = np.cumsum(fine_data.weights * norms)
    assert partial[-1] - partial[len(partial) // 2 - 1] < 0.02 * partial[-1]


def test_elliptic_value_matches_harmonic_oracle(fine_data):
    # flat disk, q = 0, z = 0: the extension of cos 2b is r^2 cos 2b,
    # so Pi(0) cos 2b = 2 cos 2b
    shape = np.cos(2.0 * fine_data.angles)
    value = elliptic_dtn(fine_data, 0.0, shape)
    assert np.abs(value - 2.0 * shape).max() / 2.0 < 0.03


def test_elliptic_zero_datum_gives_zero(fine_data):
    zero = np.zeros(len(fine_data.angles))
    assert np.abs(elliptic_dtn(fine_data, 0.0, zero)).max() == 0.0
    assert np.abs(elliptic_trace_series(fine_data, 0.0, zero)).max() == 0.0


def test_elliptic_trace_series_diverges_from_direct(fine_data):
    # the termwise flux series has non-decaying terms: its partial sums
    # move monotonically away from the direct value as modes are added
    # (the derivative-series lemma needs m > n/2, excluding the value)
    shape = np.cos(2.0 * fine_data.angles)
    direct = elliptic_dtn(fine_data, 0.0, shape)
    gaps = []
    for count in (30, 60, 120):
        partial = elliptic_trace_series(fine_data, 0.0, shape, count=count)
        gaps.append(np.abs(partial - direct).max())
    assert gaps[0] > np.abs(direct).max()
    assert gaps[2] > gaps[1] > gaps[0]


def test_elliptic_field_series_converges_in_volume_norm(fine_data):
    shape = np.cos(2.0 * fine_data.angles)
    vol = fine_data.ops.quad_weights
    direct = solve_elliptic(fine_data, 0.0, shape)
    scale = np.sqrt((direct**2 * vol).sum())

    def field_err(data):
        series = elliptic_field_series(data, 0.0, shape)
        return np.sqrt(((series - direct) ** 2 * vol).sum()) / scale

    coarse = field_err(fine_data.truncated(40))
    fine = field_err(fine_data)
    assert fine < coarse < 1.0


def test_elliptic_derivative_series_matches_bessel_sums(fine_data):
    # Rayleigh sums over zeros of J_2: sum j^{-2} = 1/12 gives
    # Pi'(0) cos 2b = -(1/6) cos 2b; sum j^{-4} = 1/576 gives
    # Pi''(0) cos 2b = -(1/144) cos 2b
    shape = np.cos(2.0 * fine_data.angles)
    dbeta = fine_data.dbeta
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        d1 = elliptic_dtn_derivative(fine_data, 1, shape)
        d2 = elliptic_dtn_derivative(fine_data, 2, shape)
    c1 = (d1.values @ shape) * dbeta / np.pi
    c2 = (d2.values @ shape) * dbeta / np.pi
    # m = 1 sits on the lemma's convergence boundary (m > n/2): slow
    # truncation tail, flagged by its reported bound
    assert abs(c1 + 1.0 / 6.0) * 6.0 < 0.2
    assert d1.tail_bound > 0.01 * abs(c1)
    assert abs(c2 + 1.0 / 144.0) * 144.0 < 0.02


def test_elliptic_derivative_tail_bound_brackets_truncation(fine_data):
    from geowavetomo.spectral import _half_norm_sq

    shape = np.cos(2.0 * fine_data.angles)
    half = fine_data.truncated(60)
    for m in (1, 2, 3):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            at_half = elliptic_dtn_derivative(half, m, shape)
            at_full = elliptic_dtn_derivative(fine_data, m, shape)
        # doubling the truncation moves the result less than the bound
        # reported at the smaller truncation (same surrogate norm)
        moved = np.sqrt(_half_norm_sq(at_half.values - at_full.values, half.dbeta)[0])
        assert np.isfinite(at_half.tail_bound)
        assert moved <= at_half.tail_bound


def test_elliptic_derivative_warns_on_slow_tail(fine_data):
    shape = np.cos(2.0 * fine_data.angles)
    with pytest.warns(TruncationWarning):
        elliptic_dtn_derivative(fine_data.truncated(60), 1, shape)


def test_resolvent_pole_raises(fine_data):
    shape = np.cos(2.0 * fine_data.angles)
    with pytest.raises(ResolventPoleError):
        elliptic_dtn(fine_data, float(fine_data.eigenvalues[0]), shape)
    with pytest.raises(ResolventPoleError):
        elliptic_field_series(fine_data, float(fine_data.eigenvalues[3]), shape)


def test_series_dtn_zero_and_linear(fine_data):
    grid = fine_data.grid
    times = np.linspace(0.0, 4.0, 400)
    zero = t_power_ramp_signal(times, grid.theta, np.zeros(grid.ntheta))
    assert np.abs(dtn_from_spectral(fine_data, zero).values).max() < 1e-14
    shape = np.cos(2.0 * grid.theta) + 0.5 * np.sin(grid.theta)
    one = dtn_from_spectral(fine_data, t_power_ramp_signal(times, grid.theta, shape))
    two = dtn_from_spectral(
        fine_data, t_power_ramp_signal(times, grid.theta, 2.0 * shape)
    )
    assert np.allclose(two.values, 2.0 * one.values, rtol=1e-12, atol=1e-14)


def test_series_dtn_rejects_rough_data(fine_data):
    grid = fine_data.grid
    times = np.linspace(0.0, 4.0, 400)
    shape = np.cos(2.0 * grid.theta)
    with pytest.raises(InsufficientSmoothnessError):
        dtn_from_spectral(fine_data, t_power_ramp_signal(times, grid.theta, shape, power=6))
    sampled = BoundarySignal(
        times, grid.theta, (times[:, None] / times[-1]) ** 8 * shape[None, :]
    )
    with pytest.raises(InsufficientSmoothnessError):
        dtn_from_spectral(fine_data, sampled)
    with pytest.raises(ValueError):
        dtn_from_spectral(
            fine_data, t_power_ramp_signal(times, grid.theta, shape), form="other"
        )


def test_series_dtn_matches_time_domain_flat(mid_grid):
    data = eigensolve(_flat_metric(), None, 56, grid=mid_grid)
    op = DtNOperator(_flat_metric(), None, mid_grid, cfl=0.5)
    times = op.default_times(4.0)
    f = t_power_ramp_signal(times, mid_grid.theta, np.cos(2.0 * mid_grid.theta))
    report = adjudicate_series_form(data, f, op.apply(f))
    assert report["chosen"] == "taylor"
    assert report["taylor"] < 0.06
    assert report["literal"] > 10.0 * report["taylor"]


def test_series_dtn_matches_time_domain_curved_with_potential(mid_grid):
    data = eigensolve(_curved_metric(), _qbump(), 56, grid=mid_grid)
    op = DtNOperator(_curved_metric(), _qbump(), mid_grid, cfl=0.5)
    times = op.default_times(4.0)
    f = t_power_ramp_signal(times, mid_grid.theta, np.cos(2.0 * mid_grid.theta))
    report = adjudicate_series_form(data, f, op.apply(f))
    assert report["chosen"] == "taylor"
    assert report["taylor"] < 0.08


def test_polynomial_signal_profile_and_shape():
    times = np.linspace(0.0, 2.0, 201)
    angles = np.arange(16) * (2.0 * np.pi / 16)
    shape = np.sin(angles)
    f = t_power_ramp_signal(times, angles, shape, power=8)
    assert np.allclose(f.values[-1], shape, rtol=1e-12)
    assert np.allclose(f.values[:, 3], (times / 2.0) ** 8 * shape[3], rtol=1e-12)
    poly = Polynomial([0.0] * 8 + [2.0, -1.0])
    g = polynomial_signal(times, angles, poly, shape)
    assert np.allclose(g.values[:, 5], poly(times) * shape[5], rtol=1e-12)
