import numpy as np
import pytest

from app.algebroid import (
    BasePoint, FibrationSpec, SectionExpr, anchor_apply, bracket, full_structure, lie_algebra, sample_points,
    structure_residuals, total_basis, validate,
)
from app.errors import DimensionError
from app.expr import ONE, ZERO, Var, evaluate, parse_simplified, zeros
from app.presets import get_preset
from tests.helpers import affine_plane_model, jacobi_cyclic_sum, levi_civita, non_closed_atiyah


# ==================== VALIDATION ====================

@pytest.mark.parametrize("name", [
    "so3", "symmetric_top", "lie_algebra_so3", "standard", "standard_connection", "harmonic_oscillator",
    "free_particle", "time_dependent", "poisson_sigma", "atiyah", "atiyah_u1",
])
def test_presets_satisfy_structure_equations(name):
    report = validate(get_preset(name).model.spec, tol=1e-10)
    assert report.passed
    assert report.max_anchor_residual < 1e-10
    assert report.max_jacobi_residual < 1e-10
    assert report.max_antisymmetry_residual < 1e-10


def test_perturbed_lie_algebra_fails_jacobi():
    C = levi_civita()
    C[0, 1, 0], C[1, 0, 0] = 0.001, -0.001
    report = validate(lie_algebra(C.tolist(), name="perturbed"), tol=1e-10)
    oracle = jacobi_cyclic_sum(C)
    assert not report.passed
    assert np.max(np.abs(oracle)) > 1e-4
    assert report.max_jacobi_residual == pytest.approx(np.max(np.abs(oracle)), rel=1e-12)
    assert report.worst_jacobi_index is not None
    assert abs(oracle[tuple(report.worst_jacobi_index)]) == pytest.approx(report.max_jacobi_residual, rel=1e-12)


def test_exact_lie_algebra_has_no_worst_index():
    report = validate(lie_algebra(levi_civita().tolist()))
    assert report.passed
    assert report.max_jacobi_residual == 0.0
    assert report.worst_jacobi_index is None
    assert report.n_points == 1


def test_non_closed_curvature_fails_validation():
    report = validate(non_closed_atiyah(), tol=1e-10)
    assert not report.passed
    assert report.max_jacobi_residual == pytest.approx(1.0)


def test_anchor_violation_is_reported():
    # [e1, e2] = e1 over R^2 with the coordinate frame as anchor
    C = [[["0", "0"], ["1", "0"]], [["-1", "0"], ["0", "0"]]]
    spec = FibrationSpec.build(2, 0, 2, 0, rho_F=[["1", "0"], ["0", "1"]], C_bas=C)
    report = validate(spec, tol=1e-10)
    assert not report.passed
    assert report.max_anchor_residual == pytest.approx(1.0)
    assert report.max_jacobi_residual == 0.0


def test_antisymmetry_violation_is_reported():
    C = [[["0", "0"], ["1", "0"]], [["1", "0"], ["0", "0"]]]
    spec = FibrationSpec.build(0, 0, 2, 0, C_bas=C)
    report = validate(spec, tol=1e-10)
    assert not report.passed
    assert report.max_antisymmetry_residual == pytest.approx(2.0)


def test_validate_accepts_point_list():
    spec = get_preset("standard_connection").model.spec
    points = [BasePoint(np.array([0.1, -0.3]), np.array([0.7])), BasePoint(np.array([2.0, 1.5]), np.array([-3.0]))]
    report = validate(spec, sample=points)
    assert report.passed
    assert report.n_points == 2


def test_structure_residuals_at_a_point():
    spec = get_preset("standard_connection").model.spec
    anchor_res, jacobi_res = structure_residuals(spec, BasePoint(np.array([0.3, -0.8]), np.array([1.2])))
    assert anchor_res.shape == (3, 3, 3)
    assert jacobi_res.shape == (3, 3, 3, 3)
    assert np.max(np.abs(anchor_res)) < 1e-12
    assert np.max(np.abs(jacobi_res)) < 1e-12


# ==================== BUILD ====================

def test_build_fills_missing_arrays_with_zero():
    spec = FibrationSpec.build(1, 1, 1, 1, rho_F=[["1"]])
    assert spec.rank == 2
    assert spec.coords == ["x1", "u1"]
    assert spec.C_vert[0, 0, 0] == ZERO
    assert spec.rho_F[0, 0] == ONE


@pytest.mark.parametrize("kwargs", [
    {"nx": -1, "nu": 0, "r": 0, "k": 0},
    {"nx": 1, "nu": 0, "r": 1, "k": 0, "rho_X": [["1"]]},
    {"nx": 1, "nu": 0, "r": 1, "k": 0, "rho_F": [["1", "0"]]},
    {"nx": 1, "nu": 0, "r": 1, "k": 0, "rho_F": zeros((2, 1))},
])
def test_build_rejects_bad_dimensions(kwargs):
    with pytest.raises(DimensionError):
        FibrationSpec.build(**kwargs)


def test_lie_algebra_lives_over_a_point():
    spec = lie_algebra(levi_civita().tolist(), name="so3")
    assert (spec.nx, spec.nu, spec.r, spec.k) == (0, 0, 0, 3)
    assert spec.coords == []


def test_mixed_structure_and_trace():
    spec = get_preset("standard_connection").model.spec
    assert spec.C_mixed(0, 0, 0) == parse_simplified("x2")
    assert spec.bracket_trace(0) == ZERO
    C = full_structure(spec)
    assert C[0, 2, 2] == parse_simplified("-x2")
    assert C[2, 0, 2] == parse_simplified("x2")
    assert C[0, 1, 2] == parse_simplified("-u1")


def test_affine_algebra_is_not_unimodular():
    spec = affine_plane_model().spec
    assert validate(spec).passed
    assert evaluate(spec.bracket_trace(0), {}) == -1.0
    assert evaluate(spec.bracket_trace(1), {}) == 0.0


# ==================== SECTIONS ====================

def test_section_construction():
    spec = get_preset("so3").model.spec
    sigma = SectionExpr.of(spec, vertical=["0", "0", "1"])
    assert sigma.vertical
    assert len(sigma) == 4
    assert sigma.vertical_part == (ZERO, ZERO, ONE)
    assert not SectionExpr.of(spec, base=["1"]).vertical
    with pytest.raises(DimensionError):
        SectionExpr.of(spec, vertical=["1"])


def test_bracket_of_vertical_basis_sections_on_so3():
    spec = get_preset("so3").model.spec
    e1 = SectionExpr.of(spec, vertical=["1", "0", "0"])
    e2 = SectionExpr.of(spec, vertical=["0", "1", "0"])
    result = bracket(spec, e1, e2)
    assert list(result) == [ZERO, ZERO, ZERO, ONE]


def test_bracket_is_antisymmetric_and_applies_the_anchor():
    spec = get_preset("standard_connection").model.spec
    sigma = [Var("u1"), ZERO, Var("x1")]
    eta = [ONE, Var("x2"), ZERO]
    forward = bracket(spec, sigma, eta)
    backward = bracket(spec, eta, sigma)
    env = {"x1": 0.4, "x2": -1.3, "u1": 0.9}
    for f, b in zip(forward, backward):
        assert evaluate(f, env) == pytest.approx(-evaluate(b, env))


def test_anchor_apply():
    spec = get_preset("standard_connection").model.spec
    out = anchor_apply(spec, [1.0, 0.0, 0.0], BasePoint(np.array([0.5, 2.0]), np.array([3.0])))
    np.testing.assert_allclose(out, [1.0, 0.0, 6.0])
    out = anchor_apply(spec, [0.0, 2.0, 1.0], {"x1": 0.5, "x2": 2.0, "u1": 3.0})
    np.testing.assert_allclose(out, [0.0, 2.0, 1.0])
    with pytest.raises(DimensionError):
        anchor_apply(spec, [1.0, 0.0], {"x1": 0.5, "x2": 2.0, "u1": 3.0})


def test_base_point_checks_dimensions():
    spec = get_preset("standard").model.spec
    with pytest.raises(DimensionError):
        BasePoint(np.array([0.0]), np.array([1.0])).env(spec)


# ==================== SAMPLING ====================

def test_sample_points_are_seeded():
    spec = get_preset("standard").model.spec
    first = sample_points(spec, n=10, seed=3)
    second = sample_points(spec, n=10, seed=3)
    assert sorted(first) == ["u1", "x1", "x2"]
    for name in first:
        np.testing.assert_array_equal(first[name], second[name])
        assert np.all(np.abs(first[name]) <= 1.0)


def test_sample_box():
    spec = get_preset("standard").model.spec
    sample = sample_points(spec, n=20, box=[(0, 1), (2, 3), (-5, -4)], seed=0)
    assert np.all((sample["x2"] >= 2) & (sample["x2"] <= 3))
    assert np.all(sample["u1"] <= -4)
    sample = sample_points(spec, n=20, box=(10, 11), seed=0)
    assert np.all(sample["x1"] >= 10)
    with pytest.raises(DimensionError):
        sample_points(spec, box=[(0, 1), (0, 1)])


def test_total_basis_dimensions():
    basis = total_basis(get_preset("poisson_sigma").model.spec)
    assert basis.n_fiber == 4
    assert basis.coords == ("x1", "x2", "u1", "u2")
