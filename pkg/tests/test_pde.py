"""Solver and diagnostics tests against closed-form CDF evolutions.

A standard Gaussian start with zero drift and sigma = sqrt(2) evolves as
R(t, x) = Phi(x / sqrt(1 + 2t)); adding a constant drift c shifts the
argument by -ct, and a constant tilt h0 shifts it by +h0*t. Those three
closed forms anchor the solver; handwritten single-step arithmetic and
frozen Gaussian integrals anchor the rest.
"""
import math

import numpy as np
import pytest
from scipy.special import erf

from ranklab.coefficients import InitialDistribution, RankCoefficients
from ranklab.errors import ConfigError, NumericsError
from ranklab.particle import TiltField
from ranklab.pde import (
    DiagnosticsReport,
    PdeGrid,
    SolverOptions,
    regularity_diagnostics,
    solve_forward,
    solve_tilted,
)

# frozen quadrature values for the constant-in-time standard-Gaussian slice
GAUSS_DENSITY_CUBED = 0.09188814923696535
GAUSS_CURVATURE_RATIO = 1.0
GAUSS_MOMENT_3_2 = 0.8600399873245196
GAUSS_CURV_LQ_NORM = {1.2: 0.6112543759899278, 1.5: 0.4748681794343709}


def norm_cdf(z):
    return 0.5 * (1.0 + erf(np.asarray(z) / math.sqrt(2.0)))


def heat_exact(t, x, drift=0.0):
    s = np.sqrt(1.0 + 2.0 * t)
    return norm_cdf((x - drift * t) / s)


GAUSS = InitialDistribution("gaussian", 0.0, 1.0)
PURE_DIFFUSION = RankCoefficients.constant(0.0, math.sqrt(2.0))


def sup_error(path, drift=0.0, tilt_rate=0.0):
    err = 0.0
    for k, t in enumerate(path.t_grid):
        exact = heat_exact(t, path.x_grid, drift=drift - tilt_rate)
        err = max(err, float(np.max(np.abs(path.values[k] - exact))))
    return err


def test_heat_kernel_oracle():
    grid = PdeGrid(-8.0, 8.0, 0.1, 1e-3, 0.5)
    path = solve_forward(PURE_DIFFUSION, GAUSS, grid)
    assert sup_error(path) <= 2e-3
    rep = path.invariants_report()
    assert rep["monotone_ok"] and rep["boundary_ok"] and rep["value_range_ok"]


def test_heat_error_shrinks_under_refinement():
    # halving dx with dt scaled by 4 keeps the scheme ratio fixed
    coarse = solve_forward(PURE_DIFFUSION, GAUSS, PdeGrid(-8.0, 8.0, 0.2, 2e-3, 0.5))
    fine = solve_forward(PURE_DIFFUSION, GAUSS, PdeGrid(-8.0, 8.0, 0.1, 5e-4, 0.5))
    assert sup_error(fine) <= sup_error(coarse) / 3.0


def test_drifted_heat_oracle():
    coeffs = RankCoefficients.constant(0.5, math.sqrt(2.0))
    grid = PdeGrid(-8.0, 8.0, 0.05, 5e-4, 0.5)
    path = solve_forward(coeffs, GAUSS, grid)
    assert sup_error(path, drift=0.5) <= 3e-3


def test_centered_convection_sharper_than_upwind():
    coeffs = RankCoefficients.constant(0.5, math.sqrt(2.0))
    grid = PdeGrid(-8.0, 8.0, 0.05, 5e-4, 0.5)
    err_up = sup_error(solve_forward(coeffs, GAUSS, grid), drift=0.5)
    centered = solve_forward(coeffs, GAUSS, grid, SolverOptions(upwind=False))
    assert not centered.meta["upwind"]
    assert sup_error(centered, drift=0.5) < err_up


def test_single_explicit_step_matches_handwritten():
    u = np.array([0.0, 1.0])
    coeffs = RankCoefficients.from_tables(u, [0.3, 0.1], [1.0, 2.0])
    init = InitialDistribution("uniform", 1.4, 1.2)
    grid = PdeGrid(0.0, 4.0, 1.0, 0.1, 0.1)
    path = solve_forward(coeffs, init, grid, SolverOptions(scheme="explicit"))

    R = np.array([0.0, 0.0, 0.5, 1.0, 1.0])
    s_half = np.interp(0.5 * (R[:-1] + R[1:]), u, [1.0, 2.0])
    a_half = 0.5 * s_half**2
    v = np.interp(R, u, [0.3, 0.1])
    new = R.copy()
    for j in range(1, 4):
        diffusion = a_half[j] * (R[j + 1] - R[j]) - a_half[j - 1] * (R[j] - R[j - 1])
        upwind_grad = (R[j] - R[j - 1]) if v[j] > 0 else (R[j + 1] - R[j])
        new[j] = R[j] + 0.1 * (diffusion - v[j] * upwind_grad)
    np.testing.assert_allclose(path.values[1], new, rtol=1e-14)
    assert abs(path.values[1][2] - 0.5275) < 1e-12


def test_zero_tilt_matches_forward_exactly():
    tilt = TiltField.constant(0.0, (0.0, 0.5), (-8.0, 8.0))
    grid = PdeGrid(-8.0, 8.0, 0.1, 1e-3, 0.2)
    forward = solve_forward(PURE_DIFFUSION, GAUSS, grid)
    tilted = solve_tilted(PURE_DIFFUSION, GAUSS, tilt, grid)
    assert np.array_equal(forward.values, tilted.values)


def test_constant_tilt_closed_form():
    h0 = 0.5
    tilt = TiltField.constant(h0, (0.0, 0.6), (-8.0, 8.0))
    grid = PdeGrid(-8.0, 8.0, 0.05, 5e-4, 0.5)
    path = solve_tilted(PURE_DIFFUSION, GAUSS, tilt, grid)
    assert path.meta["tilted"]
    assert sup_error(path, tilt_rate=h0) <= 3e-3


def test_tilt_drift_duality():
    # constant tilt -b/A reproduces the forward run with drift b
    b = 0.4
    sigma = math.sqrt(2.0)
    a_val = 0.5 * sigma * sigma
    grid = PdeGrid(-8.0, 8.0, 0.1, 5e-4, 0.2)
    forward = solve_forward(RankCoefficients.constant(b, sigma), GAUSS, grid)
    tilt = TiltField.constant(-b / a_val, (0.0, 0.3), (-8.0, 8.0))
    tilted = solve_tilted(PURE_DIFFUSION, GAUSS, tilt, grid)
    np.testing.assert_allclose(tilted.values, forward.values, rtol=0, atol=1e-10)


def test_store_every_subsampling():
    grid = PdeGrid(-6.0, 6.0, 0.2, 0.1, 1.0, store_every=3)
    path = solve_forward(PURE_DIFFUSION, GAUSS, grid)
    np.testing.assert_allclose(path.t_grid, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert path.meta["store_every"] == 3

    auto = solve_forward(
        PURE_DIFFUSION, GAUSS, PdeGrid(-6.0, 6.0, 0.2, 1e-3, 1.0), SolverOptions(max_stored=101)
    )
    assert auto.t_grid.size == 101
    assert auto.t_grid[-1] == 1.0
    assert np.allclose(np.diff(auto.t_grid), 0.01)

    clamped = solve_forward(
        PURE_DIFFUSION, GAUSS, PdeGrid(-6.0, 6.0, 0.2, 0.1, 0.5, store_every=7)
    )
    np.testing.assert_allclose(clamped.t_grid, [0.0, 0.5])


def test_window_too_small_raises():
    with pytest.raises(ConfigError):
        solve_forward(PURE_DIFFUSION, GAUSS, PdeGrid(-2.0, 2.0, 0.1, 1e-3, 0.1))


def test_cfl_violations_raise():
    with pytest.raises(NumericsError):
        solve_forward(
            PURE_DIFFUSION, GAUSS, PdeGrid(-8.0, 8.0, 0.1, 0.01, 0.1),
            SolverOptions(scheme="explicit"),
        )
    fast = RankCoefficients.constant(10.0, math.sqrt(2.0))
    with pytest.raises(NumericsError):
        solve_forward(fast, GAUSS, PdeGrid(-8.0, 8.0, 0.1, 0.01, 0.1))


def test_grid_and_options_validation():
    with pytest.raises(ConfigError):
        PdeGrid(0.0, 1.0, 0.3, 0.01, 1.0)  # dx does not divide the span
    with pytest.raises(ConfigError):
        PdeGrid(0.0, 1.0, 0.1, 0.3, 1.0)  # dt does not divide T
    with pytest.raises(ConfigError):
        PdeGrid(1.0, 0.0, 0.1, 0.01, 1.0)
    with pytest.raises(ConfigError):
        SolverOptions(scheme="spectral")
    with pytest.raises(ConfigError):
        SolverOptions(mass_leak_tol=0.0)


def test_cfl_report():
    rep = PdeGrid(0.0, 1.0, 0.1, 0.01, 1.0).cfl_report(2.0, 1.5)
    assert rep["convection"] == pytest.approx(0.2)
    assert rep["diffusion"] == pytest.approx(1.5)


def test_mass_and_meta_fields():
    path = solve_forward(PURE_DIFFUSION, GAUSS, PdeGrid(-8.0, 8.0, 0.1, 1e-3, 0.1))
    assert path.meta["mass_defect"] == 0.0
    assert path.meta["max_monotone_defect"] <= 1e-12
    assert path.meta["scheme"] == "imex"
    assert not path.meta["diffusivity_floored"]


def test_zero_sigma_floored_and_flagged():
    coeffs = RankCoefficients.constant(0.2, 0.0)
    init = InitialDistribution("uniform", -0.5, 1.0)
    path = solve_forward(coeffs, init, PdeGrid(-2.0, 2.0, 0.05, 0.01, 0.5))
    assert path.meta["diffusivity_floored"]
    rep = path.invariants_report()
    assert rep["monotone_ok"] and rep["value_range_ok"]
    # pure convection at speed 0.2: the ramp midpoint moves right
    mid_start = np.interp(0.5, path.values[0], path.x_grid)
    mid_end = np.interp(0.5, path.values[-1], path.x_grid)
    assert 0.05 <= mid_end - mid_start <= 0.15


def test_tilt_coverage_warning():
    tilt = TiltField.constant(0.3, (0.0, 0.2), (-8.0, 8.0))
    grid = PdeGrid(-8.0, 8.0, 0.1, 1e-3, 0.5)
    with pytest.warns(UserWarning):
        solve_tilted(PURE_DIFFUSION, GAUSS, tilt, grid)


# ---------------------------------------------------------------------------
# diagnostics


def gaussian_slice_path(n_nodes=801):
    from ranklab.measures import GridCdfPath

    x = np.linspace(-8.0, 8.0, n_nodes)
    R = np.tile(norm_cdf(x), (3, 1))
    R[:, 0] = 0.0
    R[:, -1] = 1.0
    return GridCdfPath(np.array([0.0, 0.5, 1.0]), x, R)


def test_diagnostics_frozen_gaussian_slice():
    rep = regularity_diagnostics(gaussian_slice_path())
    assert rep.density_cubed == pytest.approx(GAUSS_DENSITY_CUBED, rel=1e-3)
    assert rep.curvature_ratio == pytest.approx(GAUSS_CURVATURE_RATIO, rel=1e-3)
    assert rep.time_deriv_ratio == 0.0
    assert rep.tail_moment_sup == pytest.approx(GAUSS_MOMENT_3_2, rel=1e-3)
    for q, norm in GAUSS_CURV_LQ_NORM.items():
        assert rep.lq_norms[q]["curvature"] == pytest.approx(norm, rel=2e-3)
        assert rep.lq_norms[q]["time_deriv"] == 0.0
    assert rep.finite
    assert rep.floored_curvature_mass < 1e-12
    assert rep.floored_time_deriv_mass == 0.0


def test_diagnostics_zero_region_contributes_zero():
    from ranklab.measures import GridCdfPath

    x = np.linspace(-2.0, 3.0, 251)
    R = np.tile(np.clip(x, 0.0, 1.0), (3, 1))
    path = GridCdfPath(np.array([0.0, 0.5, 1.0]), x, R)
    rep = regularity_diagnostics(path)
    assert rep.time_deriv_ratio == 0.0
    assert rep.floored_time_deriv_mass == 0.0
    assert rep.floored_curvature_mass == 0.0
    assert rep.density_cubed == pytest.approx(1.0, abs=5e-2)
    assert rep.floored_fraction > 0.5  # flat shoulders dominate the window


def test_diagnostics_heat_refinement_stable():
    coarse = regularity_diagnostics(
        solve_forward(PURE_DIFFUSION, GAUSS, PdeGrid(-8.0, 8.0, 0.1, 1e-3, 0.5))
    )
    fine = regularity_diagnostics(
        solve_forward(PURE_DIFFUSION, GAUSS, PdeGrid(-8.0, 8.0, 0.05, 2.5e-4, 0.5))
    )
    for attr in ("density_cubed", "curvature_ratio", "time_deriv_ratio", "tail_moment_sup"):
        a, b = getattr(coarse, attr), getattr(fine, attr)
        assert abs(a - b) <= 0.02 * max(abs(a), abs(b))
    assert coarse.finite and fine.finite


def test_diagnostics_json_and_min_nodes():
    import json

    rep = regularity_diagnostics(gaussian_slice_path(n_nodes=101))
    payload = json.loads(rep.to_json())
    assert payload["finite"] is True
    assert set(payload["lq_norms"]) == {"1.2", "1.5"}
    assert payload["tail_exponent"] == 0.5

    from ranklab.measures import GridCdfPath

    tiny = GridCdfPath(np.array([0.0, 1.0]), np.linspace(0, 1, 5), np.tile(np.linspace(0, 1, 5), (2, 1)))
    with pytest.raises(ValueError):
        regularity_diagnostics(tiny)
