import numpy as np
import pytest

from app.algebroid import SectionExpr, sample_points
from app.errors import DimensionError, NonVerticalSectionError
from app.exterior import AlgebroidForm, differential, evaluate_form
from app.expr import ZERO, Var, evaluate, parse_simplified
from app.jet import (
    JetPoint, SecondJetPoint, SectionFieldExpr, admissibility_block, complete_lift, contact_basis,
    holonomy_defect, holonomy_defect_exprs, horizontal_section, is_holonomic, jet_coords, morphism_block,
    prolongation_spec, section_admissibility_residual, section_morphism_residual, total_derivative, upper_pairs,
    v_index, xv_index, y_names, yd_names, z_functions,
)
from app.presets import get_preset, preset_standard
from tests.helpers import levi_civita, max_difference, random_expr

FLAT_PHI = "sin(x1)*x2"
# e_1 = d/dx1 + u1 d/du1 commutes with e_2 = d/dx2; y1_1 = d1 phi - phi, y1_2 = d2 phi
FLAT_Y = [["cos(x1)*x2 - sin(x1)*x2", "sin(x1)"]]


@pytest.fixture(scope="module")
def flat_connection():
    return preset_standard(2, 1, connection=[["u1", "0"]], name="flat_connection").model.spec


# ==================== COORDINATES ====================

def test_jet_coordinate_names():
    spec = get_preset("standard").model.spec
    assert jet_coords(spec) == ["x1", "x2", "u1", "y1_1", "y1_2"]
    assert y_names(get_preset("so3").model.spec) == ["y1_1", "y2_1", "y3_1"]
    assert yd_names(spec) == ["yd1_1_1", "yd1_1_2", "yd1_2_1", "yd1_2_2"]


def test_jet_point_checks_shapes():
    spec = get_preset("standard").model.spec
    env = JetPoint(np.array([0.1, 0.2]), np.array([0.3]), np.array([[0.4, 0.5]])).env(spec)
    assert env["y1_2"] == 0.5
    with pytest.raises(DimensionError):
        JetPoint(np.array([0.1, 0.2]), np.array([0.3]), np.array([[0.4]])).env(spec)
    with pytest.raises(DimensionError):
        SecondJetPoint(np.array([0.1, 0.2]), np.array([0.3]), np.array([[0.4, 0.5]]), np.zeros((1, 2, 1))).env(spec)


def test_second_jet_direction_comes_last():
    spec = get_preset("standard").model.spec
    y2 = np.zeros((1, 2, 2))
    y2[0, 0, 1] = 7.0
    env = SecondJetPoint(np.zeros(2), np.zeros(1), np.zeros((1, 2)), y2).env(spec)
    assert env["yd1_1_2"] == 7.0
    assert env["yd1_2_1"] == 0.0


# ==================== PROLONGATION ====================

def test_prolongation_basis_layout():
    spec = get_preset("so3").model.spec
    basis = prolongation_spec(spec)
    assert basis.n_fiber == 1 + 3 + 3
    assert basis.coords == ("x1", "y1_1", "y2_1", "y3_1")
    assert xv_index(spec, 2) == 3
    assert v_index(spec, 0, 0) == 4
    assert basis.anchor[v_index(spec, 1, 0), 2] == parse_simplified("1")


@pytest.mark.parametrize("name", ["standard_connection", "atiyah_u1"])
def test_prolongation_differential_squares_to_zero(name, rng):
    basis = prolongation_spec(get_preset(name).model.spec)
    env = sample_points(basis, n=10, seed=2)
    for _ in range(20):
        f = AlgebroidForm.function(random_expr(rng, basis.coords), basis.n_fiber)
        assert differential(basis, differential(basis, f)).max_abs(env) < 1e-9


def test_contact_forms_vanish_on_horizontal_sections():
    spec = get_preset("atiyah").model.spec
    env = {name: v for name, v in zip(y_names(spec), np.linspace(-0.9, 0.8, spec.k * spec.r))}
    for theta in contact_basis(spec):
        for a in range(spec.r):
            assert evaluate(evaluate_form(theta, [horizontal_section(spec, a)]), env) == pytest.approx(0.0, abs=1e-14)
    theta = contact_basis(spec)[1]
    vertical = [ZERO] * theta.rank
    vertical[xv_index(spec, 1)] = parse_simplified("1")
    assert evaluate(evaluate_form(theta, [vertical]), env) == pytest.approx(1.0)


# ==================== TOTAL DERIVATIVE ====================

def test_total_derivative_uses_the_anchor():
    spec = get_preset("standard_connection").model.spec
    rng = np.random.default_rng(0)
    assert max_difference(total_derivative(spec, Var("u1"), 0), parse_simplified("x2*u1 + y1_1"), rng) < 1e-14
    assert total_derivative(spec, Var("u1"), 1) == Var("y1_2")
    assert total_derivative(spec, Var("y1_1"), 1) == Var("yd1_1_2")
    with pytest.raises(DimensionError):
        total_derivative(spec, Var("u1"), 2)


def test_total_derivative_chain_rule():
    spec = get_preset("standard_connection").model.spec
    rng = np.random.default_rng(1)
    f = parse_simplified("x1*u1^2 + sin(y1_2)")
    expected = parse_simplified("u1^2 + 2*x1*u1*(x2*u1 + y1_1) + cos(y1_2)*yd1_2_1")
    assert max_difference(total_derivative(spec, f, 0), expected, rng) < 1e-12


def test_z_functions_on_so3(rng):
    spec = get_preset("so3").model.spec
    Z_vert, Z_mix, Z_bas = z_functions(spec)
    y = rng.uniform(-1, 1, size=3)
    env = dict(zip(y_names(spec), y))
    values = np.array([[evaluate(Z_vert[0, g, a], env) for a in range(3)] for g in range(3)])
    np.testing.assert_allclose(values, np.einsum("bga,b->ga", levi_civita(), y), atol=1e-14)
    assert Z_mix.shape == (1, 1, 3)
    assert Z_bas.shape == (1, 1, 1)


# ==================== HOLONOMY ====================

def test_holonomy_defect_on_atiyah_matches_oracle(rng):
    spec = get_preset("atiyah").model.spec
    y = rng.uniform(-1, 1, size=(3, 2))
    y2 = rng.uniform(-1, 1, size=(3, 2, 2))
    M = holonomy_defect(spec, SecondJetPoint(rng.uniform(-1, 1, size=2), np.zeros(0), y, y2))
    oracle = np.transpose(y2, (0, 1, 2)) - np.transpose(y2, (0, 2, 1)) - np.einsum("abg,ai,bj->gij", levi_civita(), y, y)
    np.testing.assert_allclose(M, oracle, atol=1e-13)


def test_holonomy_defect_diagonal_is_zero():
    M = holonomy_defect_exprs(get_preset("atiyah").model.spec)
    for gamma in range(3):
        for a in range(2):
            assert M[gamma, a, a] == ZERO


def test_is_holonomic_with_curvature():
    spec = get_preset("atiyah_u1").model.spec
    x = np.array([0.3, -0.2])
    # y = Gamma(x) is flat along the section, its derivative cancels the curvature
    honest = SecondJetPoint(x, np.zeros(0), np.array([[0.1, 0.15]]), np.array([[[0.0, -0.5], [0.5, 0.0]]]))
    assert is_holonomic(spec, honest)
    assert not is_holonomic(spec, SecondJetPoint(x, np.zeros(0), np.zeros((1, 2)), np.zeros((1, 2, 2))))


# ==================== SECTIONS ====================

def test_section_depends_only_on_x(flat_connection):
    with pytest.raises(DimensionError):
        SectionFieldExpr.build(flat_connection, ["u1"], [["0", "0"]])
    with pytest.raises(DimensionError):
        SectionFieldExpr.build(flat_connection, ["x1"], [["0"]])


def test_flat_section_is_admissible_and_a_morphism(flat_connection):
    section = SectionFieldExpr.build(flat_connection, [FLAT_PHI], FLAT_Y)
    for p in ([0.4, -1.1], [2.0, 0.3]):
        np.testing.assert_allclose(section_admissibility_residual(flat_connection, section, p), 0.0, atol=1e-13)
        np.testing.assert_allclose(section_morphism_residual(flat_connection, section, p), 0.0, atol=1e-13)


def test_wrong_section_is_not_admissible(flat_connection):
    section = SectionFieldExpr.build(flat_connection, [FLAT_PHI], [["0", "sin(x1)"]])
    res = section_admissibility_residual(flat_connection, section, {"x1": 0.5, "x2": 2.0})
    expected = np.cos(0.5) * 2.0 - np.sin(0.5) * 2.0
    assert res[0, 0] == pytest.approx(expected)
    assert res[0, 1] == pytest.approx(0.0, abs=1e-14)


def test_section_morphism_detects_curvature():
    spec = get_preset("atiyah_u1").model.spec
    point = {"x1": 0.7, "x2": -0.1}
    connection = SectionFieldExpr.build(spec, [], [["-x2/2", "x1/2"]])
    np.testing.assert_allclose(section_morphism_residual(spec, connection, point), 0.0, atol=1e-14)
    trivial = SectionFieldExpr.build(spec, [], [["0", "0"]])
    res = section_morphism_residual(spec, trivial, point)
    assert res[0, 0, 1] == pytest.approx(-1.0)
    assert res[0, 1, 0] == pytest.approx(1.0)


# ==================== COMPLETE LIFT ====================

def test_complete_lift_of_rotation_generator():
    spec = get_preset("so3").model.spec
    lift = complete_lift(spec, SectionExpr.of(spec, vertical=["0", "0", "1"]))
    assert len(lift) == 7
    env = {"y1_1": 0.3, "y2_1": -0.7, "y3_1": 1.1}
    values = [evaluate(e, env) for e in lift]
    np.testing.assert_allclose(values, [0.0, 0.0, 0.0, 1.0, -0.7, -0.3, 0.0], atol=1e-14)


def test_complete_lift_rejects_bad_sections():
    spec = get_preset("so3").model.spec
    with pytest.raises(NonVerticalSectionError):
        complete_lift(spec, SectionExpr.of(spec, base=["1"]))
    with pytest.raises(DimensionError):
        complete_lift(spec, [ZERO] * 3)


# ==================== BLOCKS ====================

def test_admissibility_and_morphism_blocks_on_standard():
    spec = get_preset("standard").model.spec
    rng = np.random.default_rng(3)
    adm = admissibility_block(spec)
    assert adm.shape == (1, 2)
    assert max_difference(adm[0, 1], parse_simplified("ud1_2 - y1_2"), rng) < 1e-14
    mor = morphism_block(spec)
    assert max_difference(mor[0, 0, 1], parse_simplified("yd1_2_1 - yd1_1_2"), rng) < 1e-14


def test_upper_pairs():
    assert upper_pairs(1) == []
    assert upper_pairs(3) == [(0, 1), (0, 2), (1, 2)]
