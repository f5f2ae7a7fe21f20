import io
import math

import numpy as np
import pytest

from mflq import (
    NumericalFailure,
    convergence_profile,
    horizon_monotonicity_check,
    integrate_finite_horizon,
    integrate_offsets,
    make_problem,
    solve_are,
)
from mflq.riccati import write_convergence_csv, write_horizon_csv

SQRT2 = math.sqrt(2.0)


def test_are_scalar_root(sp1):
    are = solve_are(sp1)
    # R P^2 + 2P - Q = 0 with A=-1: P = sqrt(2) - 1
    assert are.P[0, 0] == pytest.approx(SQRT2 - 1.0, abs=1e-12)
    assert are.Pi[0, 0] == pytest.approx(SQRT2 - 1.0, abs=1e-12)
    assert are.Theta[0, 0] == pytest.approx(1.0 - SQRT2, abs=1e-12)
    assert max(are.residual_P, are.residual_Pi) <= 1e-10


def test_are_mean_coupled_root(spmf):
    are = solve_are(spmf)
    # Pi^2 + Pi - 1 = 0 (Ahat = -1/2): Pi = (sqrt(5)-1)/2
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    assert are.Pi[0, 0] == pytest.approx(golden, abs=1e-12)
    assert are.ThetaHat[0, 0] == pytest.approx(-golden, abs=1e-12)
    # P is unaffected by the mean coupling
    assert are.P[0, 0] == pytest.approx(SQRT2 - 1.0, abs=1e-12)


def test_are_multiplicative_noise_root():
    # A = -2, C = 0.5: P solves P^2/(1) ... scalar oracle
    # -(B P)^2 / R + 2 A P + C^2 P + Q = 0 -> -P^2 - 3.75 P + 1 = 0
    p = make_problem(1, 1, A=[[-2.0]], B=[[1.0]], C=[[0.5]],
                     Q=[[1.0]], R=[[1.0]])
    are = solve_are(p)
    golden = (-3.75 + math.sqrt(3.75 ** 2 + 4.0)) / 2.0
    assert are.P[0, 0] == pytest.approx(golden, abs=1e-10)


def test_are_random_2x2_residual_and_pd(random_2x2):
    are = solve_are(random_2x2)
    assert max(are.residual_P, are.residual_Pi) <= 1e-10
    assert np.min(np.linalg.eigvalsh(are.P)) > 0
    assert np.min(np.linalg.eigvalsh(are.Pi)) > 0


def test_are_unstabilizable_raises():
    p = make_problem(1, 1, A=[[1.0]], Q=[[1.0]], R=[[1.0]])
    with pytest.raises(NumericalFailure, match="ARE divergence"):
        solve_are(p)


def test_finite_horizon_terminal_and_symmetry(sp1):
    path = integrate_finite_horizon(sp1, 2.0, steps=200)
    assert np.array_equal(path.P_of_t[-1], np.zeros((1, 1)))
    assert np.array_equal(path.Pi_of_t[-1], np.zeros((1, 1)))
    assert path.mesh[0] == 0.0 and path.mesh[-1] == 2.0
    sym = np.max(np.abs(path.P_of_t - np.swapaxes(path.P_of_t, 1, 2)))
    assert sym <= 1e-12


def test_finite_horizon_converges_to_stationary(sp1):
    are = solve_are(sp1)
    path = integrate_finite_horizon(sp1, 10.0, steps=2000)
    assert abs(path.P_of_t[0, 0, 0] - are.P[0, 0]) < 1e-6
    assert abs(path.Pi_of_t[0, 0, 0] - are.Pi[0, 0]) < 1e-6


def test_integration_order_at_least_3p5(sp1, spmf):
    for p in (sp1, spmf):
        ref = integrate_finite_horizon(p, 1.0, steps=512)
        coarse = integrate_finite_horizon(p, 1.0, steps=8)
        fine = integrate_finite_horizon(p, 1.0, steps=16)
        for attr in ("P_of_t", "Pi_of_t"):
            e_c = abs(getattr(coarse, attr)[0, 0, 0] - getattr(ref, attr)[0, 0, 0])
            e_f = abs(getattr(fine, attr)[0, 0, 0] - getattr(ref, attr)[0, 0, 0])
            assert math.log2(e_c / e_f) >= 3.5


def test_finite_horizon_rejects_bad_inputs(sp1):
    with pytest.raises(ValueError, match="T must be positive"):
        integrate_finite_horizon(sp1, -1.0)
    with pytest.raises(ValueError, match="steps must be positive"):
        integrate_finite_horizon(sp1, 1.0, steps=0)


def _sp2_pipeline(sp2, T, steps):
    are = solve_are(sp2)
    from mflq import solve_static
    static = solve_static(sp2, are.P)
    path = integrate_finite_horizon(sp2, T, steps=steps)
    path = integrate_offsets(sp2, are, path, static.lambda_star,
                             static.sigma_star)
    return are, static, path


def test_offsets_terminal_values(sp2):
    are, static, path = _sp2_pipeline(sp2, 10.0, 2000)
    assert path.phi_of_t[-1, 0] == pytest.approx(-static.lambda_star[0])
    assert path.phiHat_of_t[-1, 0] == pytest.approx(-static.lambda_star[0])
    # theta(T) = -R^{-1}[B'phi(T) + D'(P_T(T)-P) sigma*] = lambda* here
    assert path.theta_of_t[-1, 0] == pytest.approx(static.lambda_star[0])


def test_offsets_decay_into_the_interior(sp2):
    are, static, path = _sp2_pipeline(sp2, 10.0, 2000)
    mid = abs(path.phi_of_t[1000, 0])
    assert 1e-4 < mid < 5e-3
    assert abs(path.phi_of_t[0, 0]) < abs(path.phi_of_t[-1, 0])


def test_offsets_shrink_with_horizon(sp2):
    _, _, path10 = _sp2_pipeline(sp2, 10.0, 1000)
    _, _, path20 = _sp2_pipeline(sp2, 20.0, 2000)
    mid10 = abs(path10.phi_of_t[500, 0])
    mid20 = abs(path20.phi_of_t[1000, 0])
    assert mid20 < mid10 / 5.0


def test_convergence_profile_shape_and_decay(sp1):
    are = solve_are(sp1)
    path = integrate_finite_horizon(sp1, 5.0, steps=500)
    prof = convergence_profile(path, are)
    assert prof.shape == (501, 3)
    assert np.array_equal(prof[:, 0], path.mesh)
    # error grows toward the terminal layer
    assert prof[0, 1] < prof[-1, 1]
    assert prof[-1, 1] == pytest.approx(are.P[0, 0])


def test_convergence_profile_dimension_mismatch(sp1, random_2x2):
    are = solve_are(random_2x2)
    path = integrate_finite_horizon(sp1, 1.0, steps=10)
    with pytest.raises(ValueError, match="dimension mismatch"):
        convergence_profile(path, are)


def test_horizon_monotonicity(sp1):
    pi0, verdict = horizon_monotonicity_check(sp1, (1.0, 2.0, 4.0),
                                              steps_per_unit=200)
    assert verdict
    assert len(pi0) == 3
    with pytest.raises(ValueError, match="strictly increasing"):
        horizon_monotonicity_check(sp1, (2.0, 1.0))


def test_csv_writers(sp1):
    are = solve_are(sp1)
    path = integrate_finite_horizon(sp1, 1.0, steps=10)
    prof = convergence_profile(path, are)
    buf = io.StringIO()
    write_convergence_csv(prof, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,err_P,err_Pi"
    assert len(lines) == 12
    buf = io.StringIO()
    write_horizon_csv([1.0, 2.0], [are.P, are.Pi], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "T,Pi00"
    assert len(lines) == 3
