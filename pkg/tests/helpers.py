"""
Shared test utilities: random expression generation, numeric comparison of expressions,
golden file parsing and independent numpy oracles
"""
import itertools
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
import pytest

from app.algebroid import FibrationSpec
from app.expr import (
    HALF, ONE, TWO, Add, Call, Div, Mul, Neg, Pow, ScalarExpr, Sub, Var, add, as_expr, call, div, evaluate, mul,
    neg, number, parse_simplified, power, sub,
)
from app.lagrangian import ModelSpec

ROOT = Path(__file__).resolve().parent.parent
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"
PRESETS_DIR = ROOT / "presets"

LEAF_CONSTANTS = (HALF, ONE, TWO)


# ==================== RANDOM EXPRESSIONS ====================

def random_expr(rng: np.random.Generator, variables: Sequence[str], depth: int = 3) -> ScalarExpr:
    """Smart-constructed expression whose values stay moderate on [-1, 1]"""
    if depth == 0 or rng.random() < 0.2:
        if variables and rng.random() < 0.7:
            return Var(variables[rng.integers(len(variables))])
        return LEAF_CONSTANTS[rng.integers(len(LEAF_CONSTANTS))]
    a = random_expr(rng, variables, depth - 1)
    kind = rng.integers(9)
    if kind == 0:
        return add(a, random_expr(rng, variables, depth - 1))
    if kind == 1:
        return sub(a, random_expr(rng, variables, depth - 1))
    if kind == 2:
        return mul(a, random_expr(rng, variables, depth - 1))
    if kind == 3:
        b = random_expr(rng, variables, depth - 1)
        return div(a, add(TWO, mul(b, b)))
    if kind == 4:
        return power(a, TWO)
    if kind == 5:
        return call("sin", a)
    if kind == 6:
        return call("cos", a)
    if kind == 7:
        return call("exp", call("sin", a))
    return neg(call("ln", add(TWO, mul(a, a))))


def random_raw_expr(rng: np.random.Generator, variables: Sequence[str], depth: int = 3) -> ScalarExpr:
    """Same shape of trees built from bare nodes, neutral elements included"""
    if depth == 0 or rng.random() < 0.2:
        if variables and rng.random() < 0.6:
            return Var(variables[rng.integers(len(variables))])
        return number(int(rng.integers(3)))
    a = random_raw_expr(rng, variables, depth - 1)
    kind = rng.integers(7)
    if kind == 0:
        return Add(a, random_raw_expr(rng, variables, depth - 1))
    if kind == 1:
        return Sub(a, random_raw_expr(rng, variables, depth - 1))
    if kind == 2:
        return Mul(a, random_raw_expr(rng, variables, depth - 1))
    if kind == 3:
        b = random_raw_expr(rng, variables, depth - 1)
        return Div(a, Add(number(2), Mul(b, b)))
    if kind == 4:
        return Pow(a, number(2))
    if kind == 5:
        return Neg(a)
    return Call("sin" if rng.random() < 0.5 else "cos", a)


def random_env(rng: np.random.Generator, names: Iterable[str], n: int = 20, low: float = -1.0,
               high: float = 1.0) -> Dict[str, np.ndarray]:
    return {name: rng.uniform(low, high, size=n) for name in names}


def max_difference(a: ScalarExpr, b: ScalarExpr, rng: np.random.Generator, n: int = 20) -> float:
    """max |a - b| over random values of every variable either side uses"""
    names = sorted(a.variables | b.variables)
    env = random_env(rng, names, n)
    values = np.asarray(evaluate(a, env), dtype=float) - np.asarray(evaluate(b, env), dtype=float)
    return float(np.max(np.abs(values)))


def random_section(rng: np.random.Generator, coords: Sequence[str], size: int, depth: int = 2) -> List[ScalarExpr]:
    return [random_expr(rng, coords, depth) for _ in range(size)]


# ==================== GOLDEN FILES ====================

def read_equations(lines: Iterable[str]) -> Dict[str, str]:
    """'label = expr' lines -> {label: expr text}"""
    out = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        label, text = line.split(" = ", 1)
        out[label] = text
    return out


def load_golden(name: str) -> Dict[str, str]:
    with open(GOLDEN_DIR / f"{name}.txt", "r", encoding="utf-8") as f:
        return read_equations(f)


def equations_match(expected: Dict[str, str], actual: Dict[str, str], rng: np.random.Generator,
                    tol: float = 1e-9) -> List[str]:
    """Labels whose expressions disagree numerically (or are missing on either side)"""
    mismatched = sorted(set(expected) ^ set(actual))
    for label in sorted(set(expected) & set(actual)):
        if max_difference(parse_simplified(expected[label]), parse_simplified(actual[label]), rng) > tol:
            mismatched.append(label)
    return mismatched


# ==================== ORACLES ====================

def levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for perm in itertools.permutations(range(3)):
        inversions = sum(1 for i, j in itertools.combinations(range(3), 2) if perm[i] > perm[j])
        eps[perm] = -1.0 if inversions % 2 else 1.0
    return eps


def jacobi_cyclic_sum(C: np.ndarray) -> np.ndarray:
    """J[A,B,C,N] = sum_M C^N_{AM} C^M_{BC} + cyclic, constant structure constants"""
    return (np.einsum("amn,bcm->abcn", C, C)
            + np.einsum("bmn,cam->abcn", C, C)
            + np.einsum("cmn,abm->abcn", C, C))


# ==================== SPECS ====================

IDENTITY_3 = [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]


def non_closed_atiyah() -> FibrationSpec:
    """Curvature -x3 dx1^dx2 with a nonzero exterior derivative"""
    C_mix0 = [[["0"] for _ in range(3)] for _ in range(3)]
    C_mix0[0][1][0] = "-x3"
    C_mix0[1][0][0] = "x3"
    return FibrationSpec.build(3, 0, 3, 1, name="non_closed", rho_F=IDENTITY_3, C_mix0=C_mix0)


def singular_model() -> ModelSpec:
    """L = y u - u^2/2 has a vanishing Hessian"""
    spec = FibrationSpec.build(1, 1, 1, 1, name="singular", rho_F=[["1"]], rho_Ealpha=[["1"]])
    return ModelSpec(spec, as_expr("y1_1*u1 - 1/2*u1^2"), name="singular")


def affine_plane_model() -> ModelSpec:
    """Affine algebra on R^2: [e1, e2] = e2, rho(e1) = d/dx1, rho(e2) = exp(x1) d/dx2, vertical e_alpha = d/du1

    Its bracket trace is -1 along e1, so the Euler-Lagrange equation of L = |y|^2 / 2 is
    yd1_1_1 + yd1_2_2 - y1_1 = 0, solved by u = x2^2 - exp(2*x1).
    """
    C_bas = [[["0", "0"], ["0", "1"]], [["0", "-1"], ["0", "0"]]]
    spec = FibrationSpec.build(2, 1, 2, 1, name="affine_plane", rho_F=[["1", "0"], ["0", "exp(x1)"]],
                               rho_Ealpha=[["1"]], C_bas=C_bas)
    return ModelSpec(spec, as_expr("1/2*(y1_1^2 + y1_2^2)"), as_expr("1/2*(mu1_1^2 + mu1_2^2)"), name="affine_plane")


def assert_form_equals(form, expected: Dict[tuple, float], env: Dict[str, float]) -> None:
    """Every coefficient of a form at one point; entries missing from `expected` are zero"""
    for I in itertools.combinations(range(form.rank), form.degree):
        value = evaluate(form[I], env)
        assert value == pytest.approx(expected.get(I, 0.0), abs=1e-12), I
