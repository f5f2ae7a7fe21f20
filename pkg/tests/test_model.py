import json

import numpy as np
import pytest

from mflq import (
    AssumptionViolation,
    assemble_hats,
    check_mean_system_stabilizability,
    check_ms_stability,
    evaluate_maps,
    make_problem,
    normalize_cross_terms,
    problem_from_dict,
    problem_from_json,
    validate_assumption_a1,
)
from mflq.model import Dimensions, require_a1


def test_dimensions_positive():
    with pytest.raises(ValueError):
        Dimensions(0, 1)
    with pytest.raises(ValueError):
        Dimensions(2, -1)


def test_make_problem_defaults_to_zero():
    p = make_problem(2, 1, A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]])
    assert p.n == 2 and p.m == 1
    assert np.array_equal(p.Q, np.zeros((2, 2)))
    assert np.array_equal(p.Sbar, np.zeros((1, 2)))
    assert np.array_equal(p.sigma, np.zeros(2))


def test_make_problem_rejects_unknown_block():
    with pytest.raises(ValueError, match="unknown problem blocks"):
        make_problem(1, 1, A=[[1.0]], Abad=[[1.0]])


def test_shape_validation_names_block():
    with pytest.raises(ValueError, match="S must have shape"):
        make_problem(2, 1, S=[[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(ValueError, match="b must have length"):
        make_problem(2, 1, b=[1.0, 2.0, 3.0])


def test_symmetry_validation():
    with pytest.raises(ValueError, match="Q must be symmetric"):
        make_problem(2, 1, Q=[[1.0, 0.5], [0.0, 1.0]])


def test_problem_from_dict_roundtrip(tmp_path):
    doc = {"n": 1, "m": 1, "A": [[-1.0]], "B": [[1.0]], "Q": [[1.0]],
           "R": [[1.0]], "b": [1.0], "sigma": [0.5]}
    p = problem_from_dict(doc)
    assert p.A[0, 0] == -1.0
    assert p.b[0] == 1.0
    path = tmp_path / "prob.json"
    path.write_text(json.dumps(doc))
    q = problem_from_json(path)
    assert np.array_equal(q.sigma, p.sigma)


def test_problem_from_dict_rejects_unknown_field():
    with pytest.raises(ValueError, match="unknown problem fields"):
        problem_from_dict({"n": 1, "m": 1, "Z": [[1.0]]})
    with pytest.raises(ValueError, match="'n' and 'm'"):
        problem_from_dict({"A": [[1.0]]})


def test_assemble_hats(spmf):
    h = assemble_hats(spmf)
    assert h.Ahat[0, 0] == pytest.approx(-0.5)
    assert h.Bhat[0, 0] == 1.0
    assert h.Qhat[0, 0] == 1.0


def test_evaluate_maps_scalar(sp1):
    ev = evaluate_maps(sp1, np.array([[2.0]]), np.array([[3.0]]))
    # P A + A'P + Q = -4 + 1, B'P + S = 2, R + 0 = 1
    assert ev.QofP[0, 0] == pytest.approx(-3.0)
    assert ev.SofP[0, 0] == pytest.approx(2.0)
    assert ev.RofP[0, 0] == pytest.approx(1.0)
    assert ev.QhatOf[0, 0] == pytest.approx(-5.0)


def test_evaluate_maps_rejects_asymmetric(random_2x2):
    bad = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError, match="asymmetric input P"):
        evaluate_maps(random_2x2, bad, np.eye(2))
    with pytest.raises(ValueError, match="asymmetric input Pi"):
        evaluate_maps(random_2x2, np.eye(2), bad)


def test_a1_passes_on_standard_problems(sp1, sp2, spmf, random_2x2):
    for p in (sp1, sp2, spmf, random_2x2):
        report = validate_assumption_a1(p)
        assert report.passed, report.failures


def test_a1_failure_names_condition():
    p = make_problem(1, 1, A=[[-1.0]], B=[[1.0]], Q=[[1.0]])  # R = 0
    report = validate_assumption_a1(p)
    assert not report.passed
    assert "R ≻ 0" in report.failures
    with pytest.raises(AssumptionViolation, match="A1 violated"):
        require_a1(p)


def test_a1_schur_failure():
    # R fine but Q - S'R^{-1}S = 1 - 4 < 0
    p = make_problem(1, 1, A=[[-1.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]],
                     S=[[2.0]])
    report = validate_assumption_a1(p)
    assert not report.passed
    assert any("Q − SᵀR⁻¹S" in f for f in report.failures)


def test_stabilizability_detects_uncontrollable_unstable_mode():
    good = assemble_hats(make_problem(1, 1, A=[[-1.0]], B=[[1.0]],
                                      Q=[[1.0]], R=[[1.0]]))
    assert check_mean_system_stabilizability(good).stabilizable
    bad = assemble_hats(make_problem(1, 1, A=[[1.0]], Q=[[1.0]], R=[[1.0]]))
    cert = check_mean_system_stabilizability(bad)
    assert not cert.stabilizable
    assert cert.violating_eigenvalues[0].real == pytest.approx(1.0)


def test_ms_stability(sp1):
    stable, absc = check_ms_stability(sp1, np.array([[0.0]]))
    assert stable and absc == pytest.approx(-2.0)
    unstable, _ = check_ms_stability(sp1, np.array([[2.0]]))
    assert not unstable


def test_normalize_cross_terms_zeroes_S():
    p = make_problem(1, 1, A=[[-1.0]], B=[[1.0]], C=[[0.3]], D=[[0.2]],
                     Q=[[2.0]], R=[[1.0]], S=[[0.5]])
    q = normalize_cross_terms(p)
    assert np.array_equal(q.S, np.zeros((1, 1)))
    assert np.array_equal(q.Sbar, np.zeros((1, 1)))
    # A - B R^{-1} S, Q - S'R^{-1}S
    assert q.A[0, 0] == pytest.approx(-1.5)
    assert q.Q[0, 0] == pytest.approx(1.75)
    # hats of the transform equal the transformed hats
    hq = assemble_hats(q)
    assert hq.Ahat[0, 0] == pytest.approx(-1.5)
    assert hq.Qhat[0, 0] == pytest.approx(1.75)


def test_normalize_cross_terms_singular_R():
    p = make_problem(1, 1, A=[[-1.0]], B=[[1.0]], Q=[[1.0]], S=[[0.5]])
    with pytest.raises(AssumptionViolation):
        normalize_cross_terms(p)
