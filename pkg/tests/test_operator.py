import math

import numpy as np
import pytest
import scipy.linalg as sla

import paralab as pl
from paralab.operator import (OperatorError, ResolventError, ShiftedSolver,
                              grid_edge_count, make_power_operator)


def test_periodic_eigenvalues_match_fourier():
    space = pl.build_grid_space([8], 1.0, "periodic")
    op = pl.build_divergence_form(space,
                                  pl.constant_coefficients([8], "periodic", 1.0),
                                  "periodic")
    lam = np.sort(op.oracle().eigenvalues.real)
    expected = np.sort(2.0 - 2.0 * np.cos(2 * np.pi * np.arange(8) / 8))
    np.testing.assert_allclose(lam, expected, atol=1e-12)
    assert np.abs(op.oracle().eigenvalues.imag).max() < 1e-12


def test_periodic_annihilates_constants(complex_op32):
    ones = np.ones(complex_op32.n)
    assert np.abs(complex_op32.apply(ones)).max() < 1e-13


def test_numerical_range_in_coefficient_sector(rng):
    space = pl.build_grid_space([16], 1.0, "periodic")
    coeffs = pl.constant_coefficients([16], "periodic", 1.0 + 0.5j)
    op = pl.build_divergence_form(space, coeffs, "periodic")
    assert op.sector_angle == pytest.approx(math.atan(0.5))
    worst = 0.0
    for _ in range(1000):
        f = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        num = space.inner(op.apply(f), f)
        if abs(num) > 1e-12:
            worst = max(worst, abs(np.angle(num)))
    assert worst <= math.atan(0.5) + 1e-6


def test_ellipticity_rejected():
    with pytest.raises(OperatorError):
        pl.CoefficientField(np.array([1.0, -0.1 + 1j, 2.0]))


def test_coefficient_count_checked(ring64):
    bad = pl.CoefficientField(np.ones(10, dtype=complex))
    with pytest.raises(OperatorError):
        pl.build_divergence_form(ring64, bad, "periodic")
    assert grid_edge_count([64], "periodic") == 64
    assert grid_edge_count([16], "dirichlet") == 17
    assert grid_edge_count([4, 4], "dirichlet") == 2 * (3 * 4 + 2 * 4)


def test_dirichlet_kernel_trivial(dirichlet_op16, rng):
    f = rng.standard_normal(16)
    assert np.abs(dirichlet_op16.kernel_part(f)).max() == 0.0
    lam = dirichlet_op16.oracle().eigenvalues
    # textbook Dirichlet spectrum of the second-difference stencil
    expected = 2.0 - 2.0 * np.cos(np.pi * np.arange(1, 17) / 17)
    np.testing.assert_allclose(np.sort(lam.real), np.sort(expected), atol=1e-12)


def test_adjoint_consistency(complex_op32, rng):
    space = complex_op32.space
    for _ in range(100):
        f = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        g = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        lhs = space.inner(complex_op32.apply(f), g)
        rhs = space.inner(f, complex_op32.apply_adjoint(g))
        scale = space.norm(f) * space.norm(g) * np.linalg.norm(complex_op32.matrix)
        assert abs(lhs - rhs) <= 1e-10 * scale


def test_kernel_projector_idempotent(lap64, rng):
    f = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    k1 = lap64.kernel_part(f)
    k2 = lap64.kernel_part(k1)
    np.testing.assert_allclose(k1, k2, atol=1e-13)
    assert np.abs(lap64.apply(k1)).max() < 1e-12


def test_resolvent_eigenpair_identity(lap64):
    oracle = lap64.oracle()
    i = np.argsort(oracle.eigenvalues.real)[5]
    lam, v = oracle.eigenvalues[i], oracle.right[:, i]
    zeta = -0.7 + 0.3j
    g = pl.resolvent_apply(lap64, zeta, v)
    np.testing.assert_allclose(g, v / (zeta - lam), atol=1e-10)


def test_resolvent_contraction_at_minus_one(lap64, rng):
    f = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    g = pl.resolvent_apply(lap64, -1.0, f)
    assert np.linalg.norm(g) <= np.linalg.norm(f)


def test_resolvent_matches_oracle(complex_op32, rng):
    oracle = complex_op32.oracle()
    f = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    zeta = -2.0 + 1.0j
    g = pl.resolvent_apply(complex_op32, zeta, f)
    ref = oracle.right @ ((oracle.inv @ f) / (zeta - oracle.eigenvalues))
    assert np.linalg.norm(g - ref) <= 1e-9 * np.linalg.norm(ref)


def test_resolvent_identity(complex_op32, rng):
    f = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    z1, z2 = -1.0 + 0.5j, -3.0 - 0.25j
    r1 = pl.resolvent_apply(complex_op32, z1, f)
    r21 = pl.resolvent_apply(complex_op32, z2, r1)
    lhs = r1 - pl.resolvent_apply(complex_op32, z2, f)
    rhs = (z2 - z1) * r21
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_resolvent_failure_near_spectrum(lap64):
    oracle = lap64.oracle()
    i = np.argsort(oracle.eigenvalues.real)[5]
    # right-hand side along the null direction makes the system inconsistent
    with pytest.raises(ResolventError) as info:
        pl.resolvent_apply(lap64, float(oracle.eigenvalues[i].real),
                           oracle.right[:, i])
    assert info.value.distance_estimate is not None


def test_shifted_solver_non_normal(rng):
    # regression: back-substitution sign only visible off the normal case
    space = pl.build_grid_space([24], 1.0, "periodic")
    coeffs = pl.random_coefficients([24], "periodic", rng, imag_amplitude=0.5)
    op = pl.build_divergence_form(space, coeffs, "periodic")
    solver = ShiftedSolver(op.matrix)
    f = rng.standard_normal(24) + 1j * rng.standard_normal(24)
    shifts = np.array([1e-3 * np.exp(1j * 0.9), np.exp(1j * 0.9),
                       50 * np.exp(-1j * 0.9), 1e4])
    x = solver.solve_many(shifts, f)
    for j, z in enumerate(shifts):
        direct = np.linalg.solve(z * np.eye(24) - op.matrix, f)
        assert np.linalg.norm(x[:, j] - direct) <= 1e-10 * np.linalg.norm(direct)


def test_spectral_oracle_diagonal():
    space = pl.build_grid_space([6], 1.0, "periodic")
    diag = np.diag(np.arange(1.0, 7.0))
    op = pl.SectorialOperator(space, diag, order_2m=2, sector_angle=0.0)
    oracle = op.oracle()
    np.testing.assert_allclose(np.sort(oracle.eigenvalues.real),
                               np.arange(1.0, 7.0))
    assert oracle.valid


def test_spectral_oracle_reconstruction(complex_op32):
    oracle = complex_op32.oracle()
    assert oracle.reconstruction_residual <= 1e-10
    assert oracle.valid


def test_oracle_budget():
    space = pl.build_grid_space([32], 1.0, "periodic")
    op = pl.build_divergence_form(space,
                                  pl.constant_coefficients([32], "periodic", 1.0),
                                  "periodic")
    op.dense_budget = 16
    with pytest.raises(OperatorError):
        pl.spectral_oracle(op)


def test_sectoriality_self_adjoint(lap64, rng):
    rep = pl.verify_sectoriality(lap64, math.pi / 2, rng=rng)
    assert rep.c_sigma <= 1.0 + 1e-6
    rep4 = pl.verify_sectoriality(lap64, math.pi / 4, rng=rng)
    assert rep4.c_sigma <= 1.0 / math.sin(math.pi / 4) + 1e-3
    # cross-check against the exact resolvent norm on the worst sample
    lam = lap64.oracle().eigenvalues.real
    zeta = rep.worst_zeta
    exact = abs(zeta) / np.abs(zeta - lam).min()
    assert rep.c_sigma <= exact * (1 + 1e-6)


def test_sectoriality_scale_invariance(lap64, rng):
    scaled = pl.SectorialOperator(lap64.space, 3.0 * lap64.matrix,
                                  order_2m=2, sector_angle=0.0,
                                  kernel_basis=lap64.kernel_basis)
    a = pl.verify_sectoriality(lap64, math.pi / 3, rng=np.random.default_rng(9))
    b = pl.verify_sectoriality(scaled, math.pi / 3, rng=np.random.default_rng(9))
    assert a.c_sigma == pytest.approx(b.c_sigma, rel=1e-2)


def test_power_operator_scaling(lap64, rng):
    sq = make_power_operator(lap64, 2)
    assert sq.order_2m == 4
    f = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    np.testing.assert_allclose(sq.apply(f), lap64.apply(lap64.apply(f)),
                               atol=1e-9)
    # homogeneity order threads into the calculus scaling
    psi = pl.psi_make("exp_monomial", 1)
    t = 0.8
    via_power = pl.apply_psi(sq, psi, t, f)
    lam = lap64.oracle().eigenvalues
    direct = lap64.oracle().right @ (
        psi(t ** 4 * lam ** 2) * (lap64.oracle().inv @ lap64.range_part(f)))
    np.testing.assert_allclose(via_power, direct, atol=1e-9)


def test_adjoint_view_shares_oracle(complex_op32, rng):
    adj = complex_op32.adjoint()
    f = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    np.testing.assert_allclose(adj.apply(f), complex_op32.apply_adjoint(f))
    oracle = adj.oracle()
    recon = oracle.right @ (oracle.eigenvalues[:, None] * oracle.inv)
    assert np.linalg.norm(recon - adj.matrix) <= 1e-9 * np.linalg.norm(adj.matrix)
