"""Problem data, standing-assumption checks, and coefficient maps.

The controlled dynamics are

    dX = {A X + Abar E[X] + B u + Bbar E[u] + b} dt
       + {C X + Cbar E[X] + D u + Dbar E[u] + sigma} dW,

with a quadratic running cost weighted by (Q, S, R), the barred blocks
acting on the expectations, and linear terms (q, r).  Everything here is
constant-coefficient with a one-dimensional Brownian motion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AssumptionViolation

SYMMETRY_TOL = 1e-12
PD_EIG_TOL = 1e-10

_MATRIX_SHAPES = {
    "A": "nn", "Abar": "nn", "C": "nn", "Cbar": "nn", "Q": "nn", "Qbar": "nn",
    "B": "nm", "Bbar": "nm", "D": "nm", "Dbar": "nm",
    "S": "mn", "Sbar": "mn",
    "R": "mm", "Rbar": "mm",
}
_VECTOR_SHAPES = {"b": "n", "sigma": "n", "q": "n", "r": "m"}
_SYMMETRIC_BLOCKS = ("Q", "Qbar", "R", "Rbar")


@dataclass(frozen=True)
class Dimensions:
    n: int
    m: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError(f"dimensions must be >= 1, got n={self.n}, m={self.m}")


@dataclass(frozen=True)
class ProblemData:
    """All constant coefficients of the state equation and cost."""

    dims: Dimensions
    A: np.ndarray
    Abar: np.ndarray
    B: np.ndarray
    Bbar: np.ndarray
    C: np.ndarray
    Cbar: np.ndarray
    D: np.ndarray
    Dbar: np.ndarray
    Q: np.ndarray
    Qbar: np.ndarray
    S: np.ndarray
    Sbar: np.ndarray
    R: np.ndarray
    Rbar: np.ndarray
    b: np.ndarray
    sigma: np.ndarray
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        n, m = self.dims.n, self.dims.m
        sizes = {"n": n, "m": m}
        for name, code in _MATRIX_SHAPES.items():
            want = (sizes[code[0]], sizes[code[1]])
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != want:
                raise ValueError(f"{name} must have shape {want}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        for name, code in _VECTOR_SHAPES.items():
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (sizes[code],):
                raise ValueError(f"{name} must have length {sizes[code]}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        for name in _SYMMETRIC_BLOCKS:
            arr = getattr(self, name)
            if np.max(np.abs(arr - arr.T), initial=0.0) > SYMMETRY_TOL:
                raise ValueError(f"{name} must be symmetric to {SYMMETRY_TOL}")

    @property
    def n(self) -> int:
        return self.dims.n

    @property
    def m(self) -> int:
        return self.dims.m


def make_problem(n: int, m: int, **blocks) -> ProblemData:
    """Build a ProblemData, defaulting every omitted block to zero."""
    dims = Dimensions(n, m)
    sizes = {"n": n, "m": m}
    data = {}
    for name, code in _MATRIX_SHAPES.items():
        shape = (sizes[code[0]], sizes[code[1]])
        val = blocks.pop(name, None)
        data[name] = np.zeros(shape) if val is None else np.asarray(val, dtype=float)
    for name, code in _VECTOR_SHAPES.items():
        val = blocks.pop(name, None)
        data[name] = np.zeros(sizes[code]) if val is None else np.asarray(val, dtype=float)
    if blocks:
        raise ValueError(f"unknown problem blocks: {sorted(blocks)}")
    return ProblemData(dims=dims, **data)


def problem_from_dict(doc: dict) -> ProblemData:
    """Ingest problem data from a plain dict (the JSON document schema).

    Required fields: ``n``, ``m``.  Coefficient blocks are row-major nested
    lists named exactly ``A, Abar, B, Bbar, C, Cbar, D, Dbar, Q, Qbar, S,
    Sbar, R, Rbar, b, sigma, q, r``; omitted blocks default to zero.
    """
    if "n" not in doc or "m" not in doc:
        raise ValueError("problem document must contain 'n' and 'm'")
    known = set(_MATRIX_SHAPES) | set(_VECTOR_SHAPES) | {"n", "m"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown problem fields: {sorted(unknown)}")
    blocks = {k: v for k, v in doc.items() if k not in ("n", "m")}
    return make_problem(int(doc["n"]), int(doc["m"]), **blocks)


def problem_from_json(path) -> ProblemData:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


@dataclass(frozen=True)
class HatCoefficients:
    """Sums of unbarred and barred blocks; these drive the mean dynamics."""

    Ahat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    Dhat: np.ndarray
    Qhat: np.ndarray
    Shat: np.ndarray
    Rhat: np.ndarray


def assemble_hats(problem: ProblemData) -> HatCoefficients:
    return HatCoefficients(
        Ahat=problem.A + problem.Abar,
        Bhat=problem.B + problem.Bbar,
        Chat=problem.C + problem.Cbar,
        Dhat=problem.D + problem.Dbar,
        Qhat=problem.Q + problem.Qbar,
        Shat=problem.S + problem.Sbar,
        Rhat=problem.R + problem.Rbar,
    )


@dataclass(frozen=True)
class MapEvaluation:
    """The coefficient maps evaluated at a pair of symmetric matrices."""

    QofP: np.ndarray
    SofP: np.ndarray
    RofP: np.ndarray
    QhatOf: np.ndarray
    ShatOf: np.ndarray
    RhatOf: np.ndarray


def evaluate_maps(problem: ProblemData, P: np.ndarray, Pi: np.ndarray) -> MapEvaluation:
    """Evaluate the six Riccati coefficient maps at (P, Pi).

    QofP   = P A + A' P + C' P C + Q
    SofP   = B' P + D' P C + S
    RofP   = R + D' P D
    QhatOf = Pi Ahat + Ahat' Pi + Chat' P Chat + Qhat
    ShatOf = Bhat' Pi + Dhat' P Chat + Shat
    RhatOf = Rhat + Dhat' P Dhat
    """
    P = np.asarray(P, dtype=float)
    Pi = np.asarray(Pi, dtype=float)
    for name, M in (("P", P), ("Pi", Pi)):
        if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError(f"asymmetric input {name}")
    h = assemble_hats(problem)
    A, B, C, D = problem.A, problem.B, problem.C, problem.D
    return MapEvaluation(
        QofP=P @ A + A.T @ P + C.T @ P @ C + problem.Q,
        SofP=B.T @ P + D.T @ P @ C + problem.S,
        RofP=problem.R + D.T @ P @ D,
        QhatOf=Pi @ h.Ahat + h.Ahat.T @ Pi + h.Chat.T @ P @ h.Chat + h.Qhat,
        ShatOf=h.Bhat.T @ Pi + h.Dhat.T @ P @ h.Chat + h.Shat,
        RhatOf=h.Rhat + h.Dhat.T @ P @ h.Dhat,
    )


@dataclass(frozen=True)
class A1Report:
    passed: bool
    failures: list[str] = field(default_factory=list)
    min_eigenvalues: dict = field(default_factory=dict)


def validate_assumption_a1(problem: ProblemData) -> A1Report:
    """Check positive definiteness of R, Rhat and the Schur-reduced weights.

    Passes iff R > 0, Rhat > 0, Q - S' R^{-1} S > 0 and
    Qhat - Shat' Rhat^{-1} Shat > 0, each with minimum eigenvalue above
    PD_EIG_TOL.  Failures are reported, never raised.
    """
    h = assemble_hats(problem)
    conditions = [("R ≻ 0", problem.R), ("R̂ ≻ 0", h.Rhat)]
    min_eigs = {}
    failures = []
    for name, M in conditions:
        lo = float(np.min(np.linalg.eigvalsh(M)))
        min_eigs[name] = lo
        if lo <= PD_EIG_TOL:
            failures.append(name)
    # Schur complements need invertible R blocks
    if not failures:
        schur = problem.Q - problem.S.T @ np.linalg.solve(problem.R, problem.S)
        schur_hat = h.Qhat - h.Shat.T @ np.linalg.solve(h.Rhat, h.Shat)
        for name, M in (
            ("Q − SᵀR⁻¹S ≻ 0", schur),
            ("Q̂ − ŜᵀR̂⁻¹Ŝ ≻ 0", schur_hat),
        ):
            lo = float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T))))
            min_eigs[name] = lo
            if lo <= PD_EIG_TOL:
                failures.append(name)
    return A1Report(passed=not failures, failures=failures, min_eigenvalues=min_eigs)


def require_a1(problem: ProblemData) -> None:
    report = validate_assumption_a1(problem)
    if not report.passed:
        raise AssumptionViolation(f"A1 violated: {', '.join(report.failures)}")


@dataclass(frozen=True)
class StabilizabilityCertificate:
    stabilizable: bool
    violating_eigenvalues: list = field(default_factory=list)


def check_mean_system_stabilizability(hats: HatCoefficients) -> StabilizabilityCertificate:
    """PBH-style eigenvector test for stabilizability of (Ahat, Bhat).

    For every eigenvalue of Ahat with nonnegative real part and left
    eigenvector v, the mode is controllable iff ||Bhat' v|| > PD_EIG_TOL.
    """
    eigvals, left = np.linalg.eig(hats.Ahat.T)
    violating = []
    for lam, v in zip(eigvals, left.T):
        if lam.real >= 0 and np.linalg.norm(hats.Bhat.T @ v) <= PD_EIG_TOL:
            violating.append(complex(lam))
    return StabilizabilityCertificate(stabilizable=not violating, violating_eigenvalues=violating)


def mean_square_generator(A_cl: np.ndarray, C_cl: np.ndarray) -> np.ndarray:
    """Second-moment generator (I kron A_cl) + (A_cl kron I) + (C_cl kron C_cl)."""
    n = A_cl.shape[0]
    eye = np.eye(n)
    return np.kron(eye, A_cl) + np.kron(A_cl, eye) + np.kron(C_cl, C_cl)


def check_ms_stability(problem: ProblemData, Theta: np.ndarray) -> tuple[bool, float]:
    """Mean-square stability of the closed loop under the feedback Theta.

    Returns (stable, spectral abscissa of the second-moment generator).
    """
    Theta = np.asarray(Theta, dtype=float).reshape(problem.m, problem.n)
    A_cl = problem.A + problem.B @ Theta
    C_cl = problem.C + problem.D @ Theta
    L = mean_square_generator(A_cl, C_cl)
    abscissa = float(np.max(np.linalg.eigvals(L).real))
    return abscissa < -PD_EIG_TOL, abscissa


def normalize_cross_terms(problem: ProblemData) -> ProblemData:
    """Zero the cross-weight blocks by absorbing them into (A, C, Q).

    Replaces A by A - B R^{-1} S, C by C - D R^{-1} S, Q by Q - S' R^{-1} S,
    applies the analogous hat transform, and rewrites the barred blocks so
    the new hats are exactly the transformed hats.  The finite-horizon
    Riccati solutions are unchanged by this transform.
    """
    h = assemble_hats(problem)
    try:
        RinvS = np.linalg.solve(problem.R, problem.S)
        RhinvSh = np.linalg.solve(h.Rhat, h.Shat)
    except np.linalg.LinAlgError as exc:
        raise AssumptionViolation("A1 violated") from exc
    A_new = problem.A - problem.B @ RinvS
    C_new = problem.C - problem.D @ RinvS
    Q_new = problem.Q - problem.S.T @ RinvS
    Ahat_new = h.Ahat - h.Bhat @ RhinvSh
    Chat_new = h.Chat - h.Dhat @ RhinvSh
    Qhat_new = h.Qhat - h.Shat.T @ RhinvSh
    Q_new = 0.5 * (Q_new + Q_new.T)
    Qhat_new = 0.5 * (Qhat_new + Qhat_new.T)
    zero_mn = np.zeros((problem.m, problem.n))
    return replace(
        problem,
        A=A_new, C=C_new, Q=Q_new, S=zero_mn,
        Abar=Ahat_new - A_new, Cbar=Chat_new - C_new,
        Qbar=Qhat_new - Q_new, Sbar=zero_mn.copy(),
    )
