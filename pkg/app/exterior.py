"""
Exterior calculus on an anchored bundle given by coefficient expressions
Forms are stored sparsely over strictly increasing index tuples of the dual basis
"""
import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from app.errors import DegreeError, DimensionError
from app.expr import (
    HALF, ONE, ZERO, Env, ScalarExpr, Var, add, as_expr, evaluate, evaluate_array, mul, neg, sub, total,
)

Index = Tuple[int, ...]


# ==================== ANCHORED BASIS ====================

@dataclass(frozen=True, eq=False)
class AnchoredBasisSpec:
    """Local basis {e_A} of an anchored bundle: anchor[A][J] = rho^J_A, C[A][B][N] = C^N_{AB}"""
    coords: Tuple[str, ...]
    anchor: np.ndarray
    C: np.ndarray
    name: str = ""

    def __post_init__(self):
        n = self.anchor.shape[0]
        if self.anchor.shape != (n, len(self.coords)):
            raise DimensionError(f"anchor must be {n}x{len(self.coords)}, got {self.anchor.shape}")
        if self.C.shape != (n, n, n):
            raise DimensionError(f"C must be {n}x{n}x{n}, got {self.C.shape}")

    @property
    def n_coords(self) -> int:
        return len(self.coords)

    @property
    def n_fiber(self) -> int:
        return self.anchor.shape[0]

    def rho(self, A: int, f: ScalarExpr) -> ScalarExpr:
        """Anchor of e_A acting on f as a derivation"""
        return total(mul(self.anchor[A, J], f.diff(name)) for J, name in enumerate(self.coords))

    def rho_section(self, sigma: Sequence[ScalarExpr], f: ScalarExpr) -> ScalarExpr:
        return total(mul(sigma[A], self.rho(A, f)) for A in range(self.n_fiber))

    def antisymmetric_C(self, A: int, B: int, N: int) -> ScalarExpr:
        return mul(HALF, sub(self.C[A, B, N], self.C[B, A, N]))

    def antisymmetry_residual(self, env: Env) -> float:
        n = self.n_fiber
        worst = 0.0
        for A in range(n):
            for B in range(A, n):
                for N in range(n):
                    value = evaluate(add(self.C[A, B, N], self.C[B, A, N]), env)
                    worst = max(worst, float(np.max(np.abs(value))))
        return worst


# ==================== FORMS ====================

def permutation_sign(indices: Sequence[int]) -> int:
    """Sign of the sorting permutation; 0 when an index repeats"""
    if len(set(indices)) != len(indices):
        return 0
    inversions = sum(1 for i, j in itertools.combinations(range(len(indices)), 2) if indices[i] > indices[j])
    return -1 if inversions % 2 else 1


@dataclass(frozen=True, eq=False)
class AlgebroidForm:
    """p-form with coefficients keyed by increasing index tuples (zero entries dropped)"""
    degree: int
    rank: int
    coeffs: Mapping[Index, ScalarExpr] = field(default_factory=dict)

    @classmethod
    def build(cls, degree: int, rank: int, items: Iterable[Tuple[Index, ScalarExpr]] = ()) -> "AlgebroidForm":
        if degree < 0 or degree > rank:
            raise DegreeError(f"Form degree {degree} outside 0..{rank}")
        coeffs: Dict[Index, ScalarExpr] = {}
        for idx, value in items:
            if len(idx) != degree:
                raise DegreeError(f"Index tuple {idx} does not match degree {degree}")
            if any(i < 0 or i >= rank for i in idx):
                raise DimensionError(f"Index tuple {idx} outside rank {rank}")
            sign = permutation_sign(idx)
            if sign == 0:
                continue
            key = tuple(sorted(idx))
            term = value if sign > 0 else neg(value)
            coeffs[key] = add(coeffs[key], term) if key in coeffs else term
        return cls(degree, rank, {k: v for k, v in coeffs.items() if v != ZERO})

    @classmethod
    def zero(cls, degree: int, rank: int) -> "AlgebroidForm":
        return cls.build(degree, rank)

    @classmethod
    def function(cls, f, rank: int) -> "AlgebroidForm":
        return cls.build(0, rank, [((), as_expr(f))])

    @classmethod
    def covector(cls, rank: int, i: int) -> "AlgebroidForm":
        return cls.build(1, rank, [((i,), ONE)])

    def __getitem__(self, idx: Index) -> ScalarExpr:
        sign = permutation_sign(idx)
        if sign == 0:
            return ZERO
        value = self.coeffs.get(tuple(sorted(idx)), ZERO)
        return value if sign > 0 else neg(value)

    def scalar(self) -> ScalarExpr:
        if self.degree != 0:
            raise DegreeError(f"Form of degree {self.degree} is not a function")
        return self.coeffs.get((), ZERO)

    def _check(self, other: "AlgebroidForm") -> None:
        if (self.degree, self.rank) != (other.degree, other.rank):
            raise DegreeError(f"Cannot combine forms ({self.degree},{self.rank}) and ({other.degree},{other.rank})")

    def __add__(self, other: "AlgebroidForm") -> "AlgebroidForm":
        self._check(other)
        return AlgebroidForm.build(self.degree, self.rank, list(self.coeffs.items()) + list(other.coeffs.items()))

    def __sub__(self, other: "AlgebroidForm") -> "AlgebroidForm":
        return self + (-other)

    def __neg__(self) -> "AlgebroidForm":
        return AlgebroidForm(self.degree, self.rank, {k: neg(v) for k, v in self.coeffs.items()})

    def scale(self, f) -> "AlgebroidForm":
        f = as_expr(f)
        return AlgebroidForm.build(self.degree, self.rank, [(k, mul(f, v)) for k, v in self.coeffs.items()])

    def substitute(self, mapping: Mapping[str, ScalarExpr]) -> "AlgebroidForm":
        return AlgebroidForm.build(self.degree, self.rank, [(k, v.substitute(mapping)) for k, v in self.coeffs.items()])

    def evaluate(self, env: Env) -> Dict[Index, np.ndarray]:
        return {k: evaluate(v, env) for k, v in self.coeffs.items()}

    def max_abs(self, env: Env) -> float:
        return max((float(np.max(np.abs(v))) for v in self.evaluate(env).values()), default=0.0)

    def is_zero(self) -> bool:
        return not self.coeffs


def wedge(alpha: AlgebroidForm, beta: AlgebroidForm) -> AlgebroidForm:
    if alpha.rank != beta.rank:
        raise DimensionError(f"Rank mismatch {alpha.rank} vs {beta.rank}")
    degree = alpha.degree + beta.degree
    if degree > alpha.rank:
        raise DegreeError(f"Wedge product of degree {degree} exceeds rank {alpha.rank}")
    items = []
    for I, f in alpha.coeffs.items():
        for J, g in beta.coeffs.items():
            if set(I) & set(J):
                continue
            items.append((I + J, mul(f, g)))
    return AlgebroidForm.build(degree, alpha.rank, items)


def wedge_all(forms: Sequence[AlgebroidForm], rank: int) -> AlgebroidForm:
    result = AlgebroidForm.function(ONE, rank)
    for form in forms:
        result = wedge(result, form)
    return result


# ==================== OPERATIONS ====================

def _check_rank(spec: AnchoredBasisSpec, omega: AlgebroidForm) -> None:
    if omega.rank != spec.n_fiber:
        raise DimensionError(f"Form of rank {omega.rank} on a basis of rank {spec.n_fiber}")


def function_differential(spec: AnchoredBasisSpec, f: ScalarExpr) -> AlgebroidForm:
    """df = rho(e_A)(f) e^A"""
    return AlgebroidForm.build(1, spec.n_fiber, [((A,), spec.rho(A, f)) for A in range(spec.n_fiber)])


def covector_differential(spec: AnchoredBasisSpec, gamma: int) -> AlgebroidForm:
    """de^gamma = -1/2 C^gamma_{AB} e^A ^ e^B"""
    n = spec.n_fiber
    items = [((A, B), neg(spec.antisymmetric_C(A, B, gamma))) for A in range(n) for B in range(A + 1, n)]
    return AlgebroidForm.build(2, n, items)


def differential(spec: AnchoredBasisSpec, omega: AlgebroidForm) -> AlgebroidForm:
    """Exterior differential via the coordinate rules and graded Leibniz"""
    _check_rank(spec, omega)
    n = spec.n_fiber
    if omega.degree >= n:
        raise DegreeError(f"Cannot differentiate a {omega.degree}-form on a rank {n} bundle")
    de = {}
    result = AlgebroidForm.zero(omega.degree + 1, n)
    for I, f in omega.coeffs.items():
        basis = [AlgebroidForm.covector(n, i) for i in I]
        result = result + wedge(function_differential(spec, f), wedge_all(basis, n))
        for pos, i in enumerate(I):
            if i not in de:
                de[i] = covector_differential(spec, i)
            if de[i].is_zero():
                continue
            factors = basis[:pos] + [de[i]] + basis[pos + 1:]
            term = wedge_all(factors, n).scale(f)
            result = result + (term if pos % 2 == 0 else -term)
    return result


def contraction(sigma: Sequence, omega: AlgebroidForm) -> AlgebroidForm:
    """(i_sigma omega)(...) = omega(sigma, ...)"""
    if omega.degree == 0:
        raise DegreeError("Cannot contract a 0-form")
    if len(sigma) != omega.rank:
        raise DimensionError(f"Section has {len(sigma)} coefficients, form rank is {omega.rank}")
    sigma = [as_expr(s) for s in sigma]
    items = []
    for I, f in omega.coeffs.items():
        for pos, m in enumerate(I):
            if sigma[m] == ZERO:
                continue
            term = mul(sigma[m], f)
            items.append((I[:pos] + I[pos + 1:], term if pos % 2 == 0 else neg(term)))
    return AlgebroidForm.build(omega.degree - 1, omega.rank, items)


def evaluate_form(omega: AlgebroidForm, sections: Sequence[Sequence]) -> ScalarExpr:
    """omega(s_0, ..., s_p) as a scalar expression"""
    if len(sections) != omega.degree:
        raise DegreeError(f"A {omega.degree}-form needs {omega.degree} arguments, got {len(sections)}")
    for s in sections:
        omega = contraction(s, omega)
    return omega.scalar()


def lie_derivative(spec: AnchoredBasisSpec, sigma: Sequence, omega: AlgebroidForm) -> AlgebroidForm:
    """d_sigma = i_sigma d + d i_sigma"""
    _check_rank(spec, omega)
    result = AlgebroidForm.zero(omega.degree, omega.rank)
    if omega.degree < spec.n_fiber:
        result = result + contraction(sigma, differential(spec, omega))
    if omega.degree > 0:
        result = result + differential(spec, contraction(sigma, omega))
    return result


def unit_section(rank: int, i: int) -> List[ScalarExpr]:
    return [ONE if j == i else ZERO for j in range(rank)]


def section_bracket(spec: AnchoredBasisSpec, sigma: Sequence, eta: Sequence) -> List[ScalarExpr]:
    """[sigma, eta]^N = sigma^A eta^B C^N_{AB} + rho(sigma)(eta^N) - rho(eta)(sigma^N)"""
    n = spec.n_fiber
    sigma = [as_expr(s) for s in sigma]
    eta = [as_expr(s) for s in eta]
    if len(sigma) != n or len(eta) != n:
        raise DimensionError(f"Sections must have {n} coefficients")
    result = []
    for N in range(n):
        algebraic = total(
            mul(mul(sigma[A], eta[B]), spec.C[A, B, N])
            for A in range(n) for B in range(n)
            if sigma[A] != ZERO and eta[B] != ZERO
        )
        derivative = sub(spec.rho_section(sigma, eta[N]), spec.rho_section(eta, sigma[N]))
        result.append(add(algebraic, derivative))
    return result


def koszul_differential(spec: AnchoredBasisSpec, omega: AlgebroidForm, sections: Sequence[Sequence]) -> ScalarExpr:
    """d omega(s_0..s_p) by the global formula on sections"""
    _check_rank(spec, omega)
    p = omega.degree
    if len(sections) != p + 1:
        raise DegreeError(f"Need {p + 1} sections, got {len(sections)}")
    terms = []
    for k, s_k in enumerate(sections):
        rest = [s for j, s in enumerate(sections) if j != k]
        value = spec.rho_section([as_expr(c) for c in s_k], evaluate_form(omega, rest))
        terms.append(value if k % 2 == 0 else neg(value))
    for k, l in itertools.combinations(range(p + 1), 2):
        bracket = section_bracket(spec, sections[k], sections[l])
        rest = [s for j, s in enumerate(sections) if j not in (k, l)]
        value = evaluate_form(omega, [bracket] + rest)
        terms.append(value if (k + l) % 2 == 0 else neg(value))
    return total(terms)


# ==================== BUNDLE MAPS ====================

@dataclass(frozen=True, eq=False)
class BundleMapExpr:
    """Phi*x'^J = base_map[J](x), Phi*e'^B = fiber[B][A] e^A"""
    base_map: Tuple[ScalarExpr, ...]
    fiber: np.ndarray

    def check(self, source: AnchoredBasisSpec, target: AnchoredBasisSpec) -> None:
        if len(self.base_map) != target.n_coords:
            raise DimensionError(f"Base map has {len(self.base_map)} components, target has {target.n_coords} coordinates")
        if self.fiber.shape != (target.n_fiber, source.n_fiber):
            raise DimensionError(f"Fiber matrix must be {target.n_fiber}x{source.n_fiber}, got {self.fiber.shape}")

    def compose(self, target: AnchoredBasisSpec, f: ScalarExpr) -> ScalarExpr:
        return f.substitute(dict(zip(target.coords, self.base_map)))


def identity_map(spec: AnchoredBasisSpec) -> BundleMapExpr:
    fiber = np.empty((spec.n_fiber, spec.n_fiber), dtype=object)
    for A, B in np.ndindex(*fiber.shape):
        fiber[A, B] = ONE if A == B else ZERO
    return BundleMapExpr(tuple(Var(c) for c in spec.coords), fiber)


def _minor(matrix: np.ndarray, rows: Index, cols: Index) -> ScalarExpr:
    terms = []
    for perm in itertools.permutations(range(len(cols))):
        product = ONE
        for k, j in enumerate(perm):
            product = mul(product, matrix[rows[k], cols[j]])
            if product == ZERO:
                break
        if product != ZERO:
            terms.append(product if permutation_sign(perm) > 0 else neg(product))
    return total(terms)


def pullback(phi: BundleMapExpr, omega: AlgebroidForm, source: AnchoredBasisSpec, target: AnchoredBasisSpec) -> AlgebroidForm:
    """(Phi* omega)(a_1..a_p) = omega(Phi a_1, .., Phi a_p) at Phi(m)"""
    phi.check(source, target)
    _check_rank(target, omega)
    composed = {I: phi.compose(target, f) for I, f in omega.coeffs.items()}
    items = []
    for J in itertools.combinations(range(source.n_fiber), omega.degree):
        value = total(mul(f, _minor(phi.fiber, I, J)) for I, f in composed.items())
        items.append((J, value))
    return AlgebroidForm.build(omega.degree, source.n_fiber, items)


def admissibility_exprs(phi: BundleMapExpr, source: AnchoredBasisSpec, target: AnchoredBasisSpec) -> np.ndarray:
    """residual[A][J] = rho^j_A d phi^J / dx^j - rho'^J_B(phi) phi^B_A"""
    phi.check(source, target)
    out = np.empty((source.n_fiber, target.n_coords), dtype=object)
    for A in range(source.n_fiber):
        for J in range(target.n_coords):
            lhs = source.rho(A, phi.base_map[J])
            rhs = total(mul(phi.compose(target, target.anchor[B, J]), phi.fiber[B, A]) for B in range(target.n_fiber))
            out[A, J] = sub(lhs, rhs)
    return out


def morphism_exprs(phi: BundleMapExpr, source: AnchoredBasisSpec, target: AnchoredBasisSpec) -> np.ndarray:
    """residual[B][A][D] = RHS - LHS of the morphism condition (antisymmetric in A, D)"""
    phi.check(source, target)
    ns, nt = source.n_fiber, target.n_fiber
    C_t = np.empty(target.C.shape, dtype=object)
    for idx in np.ndindex(*C_t.shape):
        C_t[idx] = phi.compose(target, target.C[idx])
    out = np.empty((nt, ns, ns), dtype=object)
    for B in range(nt):
        for A in range(ns):
            for D in range(ns):
                derivative = sub(source.rho(A, phi.fiber[B, D]), source.rho(D, phi.fiber[B, A]))
                quadratic = total(
                    mul(C_t[T, S, B], mul(phi.fiber[T, A], phi.fiber[S, D]))
                    for T in range(nt) for S in range(nt)
                    if phi.fiber[T, A] != ZERO and phi.fiber[S, D] != ZERO
                )
                lhs = total(mul(phi.fiber[B, G], source.C[A, D, G]) for G in range(ns))
                out[B, A, D] = sub(add(derivative, quadratic), lhs)
    return out


def admissibility_residual(phi: BundleMapExpr, source: AnchoredBasisSpec, target: AnchoredBasisSpec, point: Env) -> np.ndarray:
    return evaluate_array(admissibility_exprs(phi, source, target), point)


def morphism_residual(phi: BundleMapExpr, source: AnchoredBasisSpec, target: AnchoredBasisSpec, point: Env) -> np.ndarray:
    return evaluate_array(morphism_exprs(phi, source, target), point)
