"""Integral equations: nonlinearity, Picard fixed point, equivalence, constants."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fluxramp import classical as cl
from fluxramp import reduced as rd
from fluxramp.errors import (
    DenominatorVanishes,
    NoConvergence,
    NoOverlap,
    NotConverged,
    ValidationError,
)

PHI = 0.5


def test_f_exact_cancellation():
    for s in (0.5, 3.0, 40.0):
        assert rd.f_nonlinearity(s, 0.0, PHI, PHI) == pytest.approx(0.0, abs=1e-15)


def test_f_direct_substitution():
    for s in (0.2, 1.0, 7.0):
        expected = PHI * (1.0 - s / np.sqrt(1.0 + s * s))
        assert_allclose(rd.f_nonlinearity(s, 0.0, 0.0, PHI), expected, rtol=1e-14)


def test_f_large_s_expansion():
    # F = ((x2-phi)^2 - x1^2) / (2 phi s^2) + O(s^-3) for bounded x
    x1, x2 = 0.7, -0.3
    for s in (1e3, 1e4, 1e5):
        lead = ((x2 - PHI) ** 2 - x1 ** 2) / (2 * PHI * s * s)
        assert_allclose(rd.f_nonlinearity(s, x1, x2, PHI), lead, rtol=30.0 / s)


def test_f_denominator_guard():
    # x1 very negative with x2 = phi and tiny phi*s makes root + x1 collapse
    with pytest.raises(DenominatorVanishes):
        rd.f_nonlinearity(1e-9, -1.0, PHI, PHI)
    with pytest.raises(ValidationError):
        rd.f_nonlinearity(-1.0, 0.0, 0.0, PHI)


def test_config_validation():
    with pytest.raises(ValidationError):
        rd.IntegralEqConfig(s_max=-5.0)
    with pytest.raises(ValidationError):
        rd.IntegralEqConfig(s_max=100.0, picard_tol=1e-4)
    with pytest.raises(ValidationError):
        rd.IntegralEqConfig(s_max=100.0, picard_tol=1e-13)
    with pytest.raises(ValidationError):
        rd.picard_solve(rd.IntegralEqConfig(s_max=50.0), PHI, 10.0)  # < 10 s_start


def test_forced_zero_f_gives_homogeneous():
    cfg = rd.IntegralEqConfig(s_max=120.0, c1=1.0, c2=-2.0)
    sol = rd.picard_solve(cfg, PHI, 10.0, force_zero_f=True)
    assert sol.iterations == 1
    assert_allclose(sol.x1, rd.homogeneous(1, sol.grid, 1.0, -2.0), atol=0)
    assert_allclose(sol.x2, rd.homogeneous(2, sol.grid, 1.0, -2.0), atol=0)
    assert sol.tail_estimate == 0.0


def test_zero_constants_zero_solution():
    cfg = rd.IntegralEqConfig(s_max=120.0, c1=0.0, c2=0.0)
    sol = rd.picard_solve(cfg, PHI, 10.0, force_zero_f=True)
    assert np.all(sol.x1 == 0.0) and np.all(sol.x2 == 0.0)


def test_picard_contraction_monotone():
    for c1, c2, phi in [(1.0, 0.0, 0.5), (0.5, -0.5, 0.5), (1.0, 1.0, 0.25),
                        (-0.8, 0.3, 1.0)]:
        cfg = rd.IntegralEqConfig(s_max=150.0, c1=c1, c2=c2, picard_tol=1e-10)
        sol = rd.picard_solve(cfg, phi, 10.0)
        assert np.all(np.diff(sol.deltas[2:]) < 0.0), (c1, c2, phi)


def test_picard_no_convergence_raises():
    cfg = rd.IntegralEqConfig(s_max=150.0, picard_tol=1e-10, max_iters=2)
    with pytest.raises(NoConvergence) as err:
        rd.picard_solve(cfg, PHI, 10.0)
    assert err.value.iterations == 2


def test_residual_bound():
    cfg = rd.IntegralEqConfig(s_max=150.0, picard_tol=1e-8)
    sol = rd.picard_solve(cfg, PHI, 10.0)
    r1, r2 = rd.residual(sol)
    assert max(np.max(np.abs(r1)), np.max(np.abs(r2))) <= 10.0 * cfg.picard_tol


def test_kernel_wronskian_at_coincidence():
    s = np.linspace(1.0, 60.0, 41)
    # j = 1: the cylinder Wronskian gives exactly 2/(pi s); j = 2 vanishes
    assert_allclose(rd.kernel_factor(1, s, s), 2.0 / (np.pi * s), atol=1e-10, rtol=0)
    assert_allclose(rd.kernel_factor(2, s, s), 0.0, atol=1e-12)


def test_crosscheck_ode_forced_homogeneous():
    cfg = rd.IntegralEqConfig(s_max=120.0, c1=1.0, c2=-0.5)
    sol = rd.picard_solve(cfg, PHI, 10.0, force_zero_f=True)
    dev = rd.crosscheck_ode(sol)
    assert dev < 1e-8


def test_crosscheck_ode_full():
    cfg = rd.IntegralEqConfig(s_max=150.0, picard_tol=1e-10)
    sol = rd.picard_solve(cfg, PHI, 10.0)
    dev = rd.crosscheck_ode(sol, window=(10.0, 100.0))
    assert dev <= 1e-6


def test_crosscheck_against_classical_flow():
    # integrate the full flow, map through the derived change of variables,
    # match the homogeneous constants at the right end, and compare curves
    params = cl.FluxParams(PHI)
    init = cl.PhaseState(0.0, np.array([1.3, -0.4]), np.array([0.2, 0.9]))
    d0 = cl.to_guiding_center(init, params)
    s0 = init.s - (d0.I1 - d0.I2) / PHI
    traj = cl.integrate(init, s0 + 157.0, params, tol=1e-12, samples=3000)
    t, x1, x2, s0_fit = rd.to_reduced(traj, params)
    assert_allclose(s0_fit, s0, atol=1e-9)
    i_end = int(np.argmin(np.abs(t - 155.0)))
    c1m, c2m = rd.match_constants_at(t[i_end], x1[i_end], x2[i_end])
    cfg = rd.IntegralEqConfig(s_max=float(t[i_end]), c1=c1m, c2=c2m, picard_tol=1e-10)
    sol = rd.picard_solve(cfg, PHI, 10.0)
    dev = rd.crosscheck_ode(sol, trajectory=traj, params=params, window=(10.0, 100.0))
    assert dev <= 1e-6


def test_crosscheck_no_overlap():
    cfg = rd.IntegralEqConfig(s_max=120.0)
    sol = rd.picard_solve(cfg, PHI, 10.0, force_zero_f=True)
    with pytest.raises(NoOverlap):
        rd.crosscheck_ode(sol, window=(500.0, 600.0))


def test_mapped_trajectory_satisfies_reduced_ode():
    # dx2/ds = x1 for the mapped flow data, via spline differentiation
    from scipy.interpolate import CubicSpline
    params = cl.FluxParams(PHI)
    init = cl.PhaseState(0.0, np.array([1.0, 0.3]), np.array([-0.1, 0.8]))
    traj = cl.integrate(init, 80.0, params, tol=1e-12, samples=4001)
    t, x1, x2, _ = rd.to_reduced(traj, params)
    spline = CubicSpline(t, x2)
    inner = slice(100, -100)
    assert np.max(np.abs(spline(t[inner], 1) - x1[inner])) < 1e-5


def test_extract_constants_planted():
    cfg = rd.IntegralEqConfig(s_max=1000.0, c1=1.0, c2=-2.0)
    sol = rd.picard_solve(cfg, PHI, 10.0, force_zero_f=True)
    ext = rd.extract_constants(sol, PHI)
    assert_allclose([ext.c1, ext.c2], [1.0, -2.0], atol=1e-8)


def test_extract_constants_degenerate():
    cfg = rd.IntegralEqConfig(s_max=1000.0, c1=0.0, c2=0.0)
    sol = rd.picard_solve(cfg, PHI, 10.0, force_zero_f=True)
    with pytest.raises(NotConverged):
        rd.extract_constants(sol, PHI)


def test_extract_constants_needs_long_solution():
    cfg = rd.IntegralEqConfig(s_max=150.0)
    sol = rd.picard_solve(cfg, PHI, 10.0, force_zero_f=True)
    with pytest.raises(ValidationError):
        rd.extract_constants(sol, PHI)


def test_perturbed_constant_sensitivity():
    # deviation between solutions grows about linearly in a c1 perturbation
    base = rd.picard_solve(rd.IntegralEqConfig(s_max=150.0, c1=1.0), PHI, 10.0)
    devs = []
    for eps in (1e-4, 2e-4):
        pert = rd.picard_solve(rd.IntegralEqConfig(s_max=150.0, c1=1.0 + eps),
                               PHI, 10.0)
        devs.append(np.max(np.abs(pert.x1 - base.x1)))
    assert 1.6 <= devs[1] / devs[0] <= 2.4


def test_a0_cross_module_agreement():
    params = cl.FluxParams(PHI)
    init = cl.PhaseState(0.0, np.array([1.3, -0.4]), np.array([0.2, 0.9]))
    d0 = cl.to_guiding_center(init, params)
    s0 = init.s - (d0.I1 - d0.I2) / PHI
    traj = cl.integrate(init, s0 + 1005.0, params, tol=1e-11, samples=4000)
    t, x1, x2, _ = rd.to_reduced(traj, params)
    i_end = int(np.argmax(t >= 1000.0))
    c1m, c2m = rd.match_constants_at(t[i_end], x1[i_end], x2[i_end])
    cfg = rd.IntegralEqConfig(s_max=float(t[i_end]), c1=c1m, c2=c2m, picard_tol=1e-8)
    sol = rd.picard_solve(cfg, PHI, 10.0)
    ext = rd.extract_constants(sol, PHI)

    samples = np.concatenate([np.linspace(0, 50, 401),
                              np.linspace(60, 7000, 200),
                              np.linspace(7500, 10000, 600)])
    far = cl.integrate(init, 10000.0, params, tol=1e-10, samples=samples)
    fwd = cl.asymptotics_forward(far, params)
    assert abs(ext.a0 - fwd.a0) <= 0.01 * fwd.a0
    assert abs(ext.a0_from_amplitude - fwd.a0) <= 0.01 * fwd.a0
