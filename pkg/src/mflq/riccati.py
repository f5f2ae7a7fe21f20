"""Backward Riccati pair on a finite horizon, stationary limits, offsets.

The state-weight matrix P_T(t) solves the matrix Riccati ODE

    dP/dt + Q(P) - S(P)' R(P)^{-1} S(P) = 0,    P_T(T) = 0,

and the mean-weight matrix Pi_T(t) solves the analogous equation in the
hat coefficients, consuming P but not conversely.  Dropping the time
derivative gives the algebraic Riccati pair whose solutions (P, Pi) are
the infinite-horizon limits.  Offset vectors (phi, phiHat, theta,
thetaHat) feed the affine part of the closed-loop feedback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as la

from .errors import NumericalFailure
from .model import (
    ProblemData,
    assemble_hats,
    check_mean_system_stabilizability,
    check_ms_stability,
    require_a1,
)

__all__ = [
    "ArePair",
    "RiccatiPath",
    "integrate_finite_horizon",
    "solve_are",
    "integrate_offsets",
    "convergence_profile",
    "horizon_monotonicity_check",
    "write_convergence_csv",
    "write_horizon_csv",
]

STATIONARITY_TOL = 1e-12
RESIDUAL_TOL = 1e-10
PD_TOL = 1e-10
INVERSION_TOL = 1e-12
PSD_NODE_TOL = 1e-10
DEFAULT_STEPS_PER_UNIT = 1000
MAX_ARE_HORIZON = 1e4
_BLOWUP = 1e8


@dataclass(frozen=True)
class ArePair:
    """Stationary Riccati solutions with gains and residuals."""

    P: np.ndarray
    Pi: np.ndarray
    Theta: np.ndarray
    ThetaHat: np.ndarray
    residual_P: float
    residual_Pi: float


@dataclass(frozen=True)
class RiccatiPath:
    """Nodewise samples of the finite-horizon Riccati data on [0, T].

    Arrays are indexed by mesh node (ascending t); matrices are stored
    as (K+1, n, n), gains as (K+1, m, n), offsets as (K+1, n) / (K+1, m).
    """

    T: float
    mesh: np.ndarray
    P_of_t: np.ndarray
    Pi_of_t: np.ndarray
    Theta_of_t: np.ndarray
    ThetaHat_of_t: np.ndarray
    phi_of_t: np.ndarray
    phiHat_of_t: np.ndarray
    theta_of_t: np.ndarray
    thetaHat_of_t: np.ndarray


def _sym(M):
    return 0.5 * (M + M.T)


def _guard_invert(RofP, RhatOf):
    if (np.min(np.linalg.eigvalsh(_sym(RofP))) < INVERSION_TOL
            or np.min(np.linalg.eigvalsh(_sym(RhatOf))) < INVERSION_TOL):
        raise NumericalFailure("Riccati inversion breakdown")


def _rhs_P(problem: ProblemData, P):
    """dP/ds with s = T - t (forward-in-s form of the backward ODE)."""
    A, B, C, D = problem.A, problem.B, problem.C, problem.D
    RofP = problem.R + D.T @ P @ D
    SofP = B.T @ P + D.T @ P @ C + problem.S
    QofP = P @ A + A.T @ P + C.T @ P @ C + problem.Q
    return _sym(QofP - SofP.T @ np.linalg.solve(RofP, SofP))


def _rhs_Pi(problem: ProblemData, hats, P, Pi):
    RhatOf = hats.Rhat + hats.Dhat.T @ P @ hats.Dhat
    ShatOf = hats.Bhat.T @ Pi + hats.Dhat.T @ P @ hats.Chat + hats.Shat
    QhatOf = (Pi @ hats.Ahat + hats.Ahat.T @ Pi
              + hats.Chat.T @ P @ hats.Chat + hats.Qhat)
    return _sym(QhatOf - ShatOf.T @ np.linalg.solve(RhatOf, ShatOf))


def _gains(problem: ProblemData, hats, P, Pi):
    RofP = problem.R + problem.D.T @ P @ problem.D
    SofP = problem.B.T @ P + problem.D.T @ P @ problem.C + problem.S
    RhatOf = hats.Rhat + hats.Dhat.T @ P @ hats.Dhat
    ShatOf = hats.Bhat.T @ Pi + hats.Dhat.T @ P @ hats.Chat + hats.Shat
    _guard_invert(RofP, RhatOf)
    Theta = -np.linalg.solve(RofP, SofP)
    ThetaHat = -np.linalg.solve(RhatOf, ShatOf)
    return Theta, ThetaHat


def _hermite_mid(y0, y1, f0, f1, h):
    """Cubic Hermite value at the interval midpoint."""
    return 0.5 * (y0 + y1) + 0.125 * h * (f0 - f1)


def _sym_batch(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _rhs_P_batch(problem: ProblemData, P_stack):
    """_rhs_P applied along the leading axis of a (k, n, n) stack."""
    A, B, C, D = problem.A, problem.B, problem.C, problem.D
    DtP = D.T @ P_stack
    RofP = problem.R + DtP @ D
    SofP = B.T @ P_stack + DtP @ C + problem.S
    QofP = P_stack @ A + A.T @ P_stack + C.T @ P_stack @ C + problem.Q
    return _sym_batch(QofP - np.swapaxes(SofP, -1, -2)
                      @ np.linalg.solve(RofP, SofP))


def _rhs_Pi_batch(problem: ProblemData, hats, P_stack, Pi_stack):
    DtP = hats.Dhat.T @ P_stack
    RhatOf = hats.Rhat + DtP @ hats.Dhat
    ShatOf = hats.Bhat.T @ Pi_stack + DtP @ hats.Chat + hats.Shat
    QhatOf = (Pi_stack @ hats.Ahat + hats.Ahat.T @ Pi_stack
              + hats.Chat.T @ P_stack @ hats.Chat + hats.Qhat)
    return _sym_batch(QhatOf - np.swapaxes(ShatOf, -1, -2)
                      @ np.linalg.solve(RhatOf, ShatOf))


def _gains_batch(problem: ProblemData, hats, P_stack, Pi_stack):
    DtP = problem.D.T @ P_stack
    RofP = problem.R + DtP @ problem.D
    SofP = problem.B.T @ P_stack + DtP @ problem.C + problem.S
    DhtP = hats.Dhat.T @ P_stack
    RhatOf = hats.Rhat + DhtP @ hats.Dhat
    ShatOf = hats.Bhat.T @ Pi_stack + DhtP @ hats.Chat + hats.Shat
    if (np.min(np.linalg.eigvalsh(_sym_batch(RofP))) < INVERSION_TOL
            or np.min(np.linalg.eigvalsh(_sym_batch(RhatOf))) < INVERSION_TOL):
        raise NumericalFailure("Riccati inversion breakdown")
    return -np.linalg.solve(RofP, SofP), -np.linalg.solve(RhatOf, ShatOf)


def integrate_finite_horizon(problem: ProblemData, T: float,
                             steps: int | None = None) -> RiccatiPath:
    """Integrate the Riccati pair backward from P_T(T) = Pi_T(T) = 0.

    Classical RK4 on a uniform mesh of `steps` intervals (default 1000
    per unit time).  P is integrated first; the Pi equation consumes P
    at matching nodes, with half-step values from a cubic Hermite
    interpolant of the stored P nodes.  Offsets are zero-filled.
    """
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    require_a1(problem)
    if steps is None:
        steps = max(1, int(round(DEFAULT_STEPS_PER_UNIT * T)))
    steps = int(steps)
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    n, m = problem.n, problem.m
    hats = assemble_hats(problem)
    h = T / steps
    K = steps
    mesh = np.linspace(0.0, T, K + 1)

    # march P forward in s = T - t; node j in s is node K - j in t
    P_s = np.empty((K + 1, n, n))
    F_s = np.empty((K + 1, n, n))
    P = np.zeros((n, n))
    P_s[0] = P
    F_s[0] = _rhs_P(problem, P)
    for j in range(K):
        k1 = F_s[j]
        k2 = _rhs_P(problem, P + 0.5 * h * k1)
        k3 = _rhs_P(problem, P + 0.5 * h * k2)
        k4 = _rhs_P(problem, P + h * k3)
        P = _sym(P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        P_s[j + 1] = P
        F_s[j + 1] = _rhs_P(problem, P)

    # march Pi on the same mesh, P interpolated at half-steps
    Pi_s = np.empty((K + 1, n, n))
    Pi = np.zeros((n, n))
    Pi_s[0] = Pi
    for j in range(K):
        P0, P1 = P_s[j], P_s[j + 1]
        Pm = _hermite_mid(P0, P1, F_s[j], F_s[j + 1], h)
        k1 = _rhs_Pi(problem, hats, P0, Pi)
        k2 = _rhs_Pi(problem, hats, Pm, Pi + 0.5 * h * k1)
        k3 = _rhs_Pi(problem, hats, Pm, Pi + 0.5 * h * k2)
        k4 = _rhs_Pi(problem, hats, P1, Pi + h * k3)
        Pi = _sym(Pi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        Pi_s[j + 1] = Pi

    P_of_t = P_s[::-1].copy()
    Pi_of_t = Pi_s[::-1].copy()
    Theta_of_t, ThetaHat_of_t = _gains_batch(problem, hats, P_of_t, Pi_of_t)
    return RiccatiPath(
        T=float(T), mesh=mesh, P_of_t=P_of_t, Pi_of_t=Pi_of_t,
        Theta_of_t=Theta_of_t, ThetaHat_of_t=ThetaHat_of_t,
        phi_of_t=np.zeros((K + 1, n)), phiHat_of_t=np.zeros((K + 1, n)),
        theta_of_t=np.zeros((K + 1, m)), thetaHat_of_t=np.zeros((K + 1, m)),
    )


def _march_to_stationarity(rhs, M0, h, label):
    """Integrate dM/ds = rhs(M) until the derivative norm drops below
    STATIONARITY_TOL; error out on blowup or horizon exhaustion."""
    M = M0
    s = 0.0
    f = rhs(M)
    while np.max(np.abs(f)) >= STATIONARITY_TOL:
        if s > MAX_ARE_HORIZON or np.max(np.abs(M)) > _BLOWUP:
            raise NumericalFailure(label)
        for _ in range(100):
            k1 = rhs(M)
            k2 = rhs(M + 0.5 * h * k1)
            k3 = rhs(M + 0.5 * h * k2)
            k4 = rhs(M + h * k3)
            M = _sym(M + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        s += 100 * h
        f = rhs(M)
    return M


def solve_are(problem: ProblemData) -> ArePair:
    """Solve the stationary algebraic Riccati pair.

    Each equation is integrated to stationarity (derivative max-abs below
    1e-12) and then polished by Newton steps on the algebraic residual;
    Pi is solved with P frozen at its converged value.  Positivity of
    both solutions and the stabilizing property of the gains are
    asserted before returning.
    """
    require_a1(problem)
    hats = assemble_hats(problem)
    cert = check_mean_system_stabilizability(hats)
    if not cert.stabilizable:
        raise NumericalFailure(
            f"ARE divergence (check A2): mean system not stabilizable, "
            f"eigenvalues {cert.violating_eigenvalues}")
    n = problem.n
    h = 0.01
    P = _march_to_stationarity(lambda M: _rhs_P(problem, M),
                               np.zeros((n, n)), h, "ARE divergence (check A2)")
    eye = np.eye(n)
    for _ in range(20):
        F = _rhs_P(problem, P)
        if np.max(np.abs(F)) < 1e-13:
            break
        RofP = problem.R + problem.D.T @ P @ problem.D
        SofP = problem.B.T @ P + problem.D.T @ P @ problem.C + problem.S
        Theta = -np.linalg.solve(RofP, SofP)
        A_cl = problem.A + problem.B @ Theta
        C_cl = problem.C + problem.D @ Theta
        L = np.kron(A_cl.T, eye) + np.kron(eye, A_cl.T) + np.kron(C_cl.T, C_cl.T)
        delta = np.linalg.solve(L, -F.reshape(-1)).reshape(n, n)
        P = _sym(P + delta)

    Pi = _march_to_stationarity(lambda M: _rhs_Pi(problem, hats, P, M),
                                np.zeros((n, n)), h, "ARE divergence (check A2)")
    for _ in range(20):
        Fhat = _rhs_Pi(problem, hats, P, Pi)
        if np.max(np.abs(Fhat)) < 1e-13:
            break
        RhatOf = hats.Rhat + hats.Dhat.T @ P @ hats.Dhat
        ShatOf = hats.Bhat.T @ Pi + hats.Dhat.T @ P @ hats.Chat + hats.Shat
        ThetaHat = -np.linalg.solve(RhatOf, ShatOf)
        A_cl_hat = hats.Ahat + hats.Bhat @ ThetaHat
        Pi = _sym(Pi + la.solve_continuous_lyapunov(A_cl_hat.T, -Fhat))

    residual_P = float(np.max(np.abs(_rhs_P(problem, P))))
    residual_Pi = float(np.max(np.abs(_rhs_Pi(problem, hats, P, Pi))))
    if max(residual_P, residual_Pi) > RESIDUAL_TOL:
        raise NumericalFailure(
            f"ARE residual {max(residual_P, residual_Pi):.3e} above {RESIDUAL_TOL}")
    if (np.min(np.linalg.eigvalsh(P)) <= PD_TOL
            or np.min(np.linalg.eigvalsh(Pi)) <= PD_TOL):
        raise NumericalFailure("ARE solution not positive definite")
    Theta, ThetaHat = _gains(problem, hats, P, Pi)
    mean_abscissa = float(np.max(np.linalg.eigvals(
        hats.Ahat + hats.Bhat @ ThetaHat).real))
    if mean_abscissa >= 0:
        raise NumericalFailure(
            f"stationary mean gain not stabilizing (abscissa {mean_abscissa:.3e})")
    stable, abscissa = check_ms_stability(problem, Theta)
    if not stable:
        raise NumericalFailure(
            f"stationary gain not mean-square stabilizing (abscissa {abscissa:.3e})")
    return ArePair(P=P, Pi=Pi, Theta=Theta, ThetaHat=ThetaHat,
                   residual_P=residual_P, residual_Pi=residual_Pi)


def integrate_offsets(problem: ProblemData, are: ArePair, path: RiccatiPath,
                      lambda_star: np.ndarray,
                      sigma_star: np.ndarray) -> RiccatiPath:
    """Fill the offset vectors on the mesh of an existing RiccatiPath.

    phi solves, backward from phi(T) = -lambda*,

        dphi/dt + [A + B Theta_T(t)]' phi
                + [C + D Theta_T(t)]' [P_T(t) - P] sigma* = 0,

    and phiHat the hat analogue; the control offsets theta, thetaHat are
    algebraic functions of the current node.
    """
    lam = np.asarray(lambda_star, dtype=float).reshape(problem.n)
    sig = np.asarray(sigma_star, dtype=float).reshape(problem.n)
    hats = assemble_hats(problem)
    K = len(path.mesh) - 1
    h = path.T / K
    A, B, C, D = problem.A, problem.B, problem.C, problem.D

    # half-step P, Pi via the same cubic Hermite rule used for the pair
    P_t = path.P_of_t
    Pi_t = path.Pi_of_t
    F_t = _rhs_P_batch(problem, P_t)
    Fh_t = _rhs_Pi_batch(problem, hats, P_t, Pi_t)
    P_mid = _hermite_mid(P_t[:-1], P_t[1:], F_t[:-1], F_t[1:], -h)
    Pi_mid = _hermite_mid(Pi_t[:-1], Pi_t[1:], Fh_t[:-1], Fh_t[1:], -h)

    def coeffs(P_stack, Pi_stack):
        Theta, ThetaHat = _gains_batch(problem, hats, P_stack, Pi_stack)
        M = np.swapaxes(A + B @ Theta, -1, -2)
        Mhat = np.swapaxes(hats.Ahat + hats.Bhat @ ThetaHat, -1, -2)
        v = (P_stack - are.P) @ sig
        g = np.einsum('kji,kj->ki', C + D @ Theta, v)
        ghat = np.einsum('kji,kj->ki', hats.Chat + hats.Dhat @ ThetaHat, v)
        return M, Mhat, g, ghat

    Mn, Mhn, gn, ghn = coeffs(P_t, Pi_t)
    Mm, Mhm, gm, ghm = coeffs(P_mid, Pi_mid)
    phi = np.empty((K + 1, problem.n))
    phiHat = np.empty((K + 1, problem.n))
    phi[K] = -lam
    phiHat[K] = -lam
    # backward in t: dphi/ds = M(t) phi + g(t) with s = T - t
    for k in range(K, 0, -1):
        i = k - 1
        y = phi[k]
        k1 = Mn[k] @ y + gn[k]
        k2 = Mm[i] @ (y + 0.5 * h * k1) + gm[i]
        k3 = Mm[i] @ (y + 0.5 * h * k2) + gm[i]
        k4 = Mn[i] @ (y + h * k3) + gn[i]
        phi[i] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        y = phiHat[k]
        k1 = Mhn[k] @ y + ghn[k]
        k2 = Mhm[i] @ (y + 0.5 * h * k1) + ghm[i]
        k3 = Mhm[i] @ (y + 0.5 * h * k2) + ghm[i]
        k4 = Mhn[i] @ (y + h * k3) + ghn[i]
        phiHat[i] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    DtP = D.T @ P_t
    RofP = problem.R + DtP @ D
    RhatOf = hats.Rhat + (hats.Dhat.T @ P_t) @ hats.Dhat
    dP = (P_t - are.P) @ sig
    theta = -np.linalg.solve(RofP, (phi @ B + dP @ D)[..., None])[..., 0]
    thetaHat = -np.linalg.solve(
        RhatOf, (phiHat @ hats.Bhat + dP @ hats.Dhat)[..., None])[..., 0]
    return RiccatiPath(
        T=path.T, mesh=path.mesh, P_of_t=path.P_of_t, Pi_of_t=path.Pi_of_t,
        Theta_of_t=path.Theta_of_t, ThetaHat_of_t=path.ThetaHat_of_t,
        phi_of_t=phi, phiHat_of_t=phiHat,
        theta_of_t=theta, thetaHat_of_t=thetaHat,
    )


def convergence_profile(path: RiccatiPath, are: ArePair) -> np.ndarray:
    """Nodewise max-abs distance to the stationary pair.

    Returns an array of rows (t, |P_T(t) - P|_inf, |Pi_T(t) - Pi|_inf).
    """
    if path.P_of_t.shape[1:] != are.P.shape:
        raise ValueError("dimension mismatch between path and stationary pair")
    err_P = np.max(np.abs(path.P_of_t - are.P), axis=(1, 2))
    err_Pi = np.max(np.abs(path.Pi_of_t - are.Pi), axis=(1, 2))
    return np.column_stack([path.mesh, err_P, err_Pi])


def horizon_monotonicity_check(problem: ProblemData, horizons,
                               steps_per_unit: int = DEFAULT_STEPS_PER_UNIT):
    """Compute Pi_T(0) per horizon and test PSD-order monotonicity.

    Returns (list of Pi_T(0), verdict); the verdict is true iff each
    successive difference has minimum eigenvalue >= -1e-9.
    """
    horizons = list(horizons)
    if any(h2 <= h1 for h1, h2 in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be strictly increasing")
    pi0 = []
    for T in horizons:
        path = integrate_finite_horizon(
            problem, T, steps=max(1, int(round(steps_per_unit * T))))
        pi0.append(path.Pi_of_t[0])
    verdict = all(
        np.min(np.linalg.eigvalsh(_sym(b - a))) >= -1e-9
        for a, b in zip(pi0, pi0[1:]))
    return pi0, verdict


def write_convergence_csv(profile: np.ndarray, fh) -> None:
    fh.write("t,err_P,err_Pi\n")
    for t, e1, e2 in profile:
        fh.write(f"{t!r},{e1!r},{e2!r}\n")


def write_horizon_csv(horizons, pi0_list, fh) -> None:
    n = pi0_list[0].shape[0]
    cols = ",".join(f"Pi{i}{j}" for i in range(n) for j in range(n))
    fh.write(f"T,{cols}\n")
    for T, Pi in zip(horizons, pi0_list):
        flat = ",".join(repr(float(v)) for v in Pi.reshape(-1))
        fh.write(f"{T!r},{flat}\n")
