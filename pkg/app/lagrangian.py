"""
Lagrangian side: model specs, vertical endomorphism, Cartan and multisymplectic forms,
Euler-Lagrange equations, regularity and Noether currents
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app.algebroid import Box, FibrationSpec, SectionExpr
from app.errors import DimensionError, MissingFunctionError
from app.exterior import (
    AlgebroidForm, AnchoredBasisSpec, contraction, differential, evaluate_form, function_differential,
    unit_section, wedge, wedge_all,
)
from app.expr import (
    ZERO, ScalarExpr, Var, compile_exprs, evaluate_array, mu_name, mul, neg, sub, total, y_name, zeros,
)
from app.jet import (
    JetPoint, SecondJetPoint, admissibility_block, complete_lift, contact_basis, jet_coords, morphism_block,
    prolongation_spec, total_derivative, v_index, y_names, z_functions,
)
from config.settings import settings

logger = logging.getLogger(__name__)


# ==================== MODEL ====================

@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A fibration together with a Lagrangian L(x, u, y) and/or a Hamiltonian H(x, u, mu)"""
    spec: FibrationSpec
    lagrangian: Optional[ScalarExpr] = None
    hamiltonian: Optional[ScalarExpr] = None
    name: str = ""
    description: str = ""
    sample_box: Optional[Box] = None
    currents: Tuple[Tuple[str, SectionExpr], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.lagrangian is None and self.hamiltonian is None:
            raise MissingFunctionError("A model needs a Lagrangian or a Hamiltonian")
        if self.lagrangian is not None:
            self._check_variables("Lagrangian", self.lagrangian, jet_coords(self.spec))
        if self.hamiltonian is not None:
            self._check_variables("Hamiltonian", self.hamiltonian, self.spec.coords + mu_names(self.spec))
        for label, sigma in self.currents:
            if len(sigma) != self.spec.rank:
                raise DimensionError(f"Current '{label}' has {len(sigma)} coefficients, needs {self.spec.rank}")

    @staticmethod
    def _check_variables(label: str, e: ScalarExpr, allowed: Sequence[str]) -> None:
        extra = e.variables - set(allowed)
        if extra:
            raise DimensionError(f"{label} references undeclared variables: {', '.join(sorted(extra))}")

    @property
    def L(self) -> ScalarExpr:
        if self.lagrangian is None:
            raise MissingFunctionError(f"Model '{self.name}' has no Lagrangian")
        return self.lagrangian

    @property
    def H(self) -> ScalarExpr:
        if self.hamiltonian is None:
            raise MissingFunctionError(f"Model '{self.name}' has no Hamiltonian")
        return self.hamiltonian

    # Derived expressions, computed once per model

    @cached_property
    def prolongation(self) -> AnchoredBasisSpec:
        return prolongation_spec(self.spec)

    @cached_property
    def L_y(self) -> np.ndarray:
        """k x r array of dL/dy^alpha_a"""
        out = zeros((self.spec.k, self.spec.r))
        for alpha in range(self.spec.k):
            for a in range(self.spec.r):
                out[alpha, a] = self.L.diff(y_name(alpha, a))
        return out

    @cached_property
    def L_u(self) -> List[ScalarExpr]:
        return [self.L.diff(name) for name in self.spec.u_names]

    @cached_property
    def hessian_exprs(self) -> np.ndarray:
        names = y_names(self.spec)
        first = [e for e in self.L_y.flat]
        out = zeros((len(names), len(names)))
        for I, f in enumerate(first):
            for J, name in enumerate(names):
                out[I, J] = f.diff(name)
        return out

    @cached_property
    def el_exprs(self) -> List[ScalarExpr]:
        logger.debug("deriving Euler-Lagrange equations for %s", self.name)
        return _euler_lagrange(self)

    @cached_property
    def energy_expr(self) -> ScalarExpr:
        pairs = ((self.L_y[alpha, a], Var(y_name(alpha, a))) for alpha in range(self.spec.k) for a in range(self.spec.r))
        return sub(total(mul(p, y) for p, y in pairs), self.L)

    @cached_property
    def jet_variables(self) -> List[str]:
        return jet_coords(self.spec)

    @cached_property
    def lagrangian_fn(self) -> Callable[..., np.ndarray]:
        return compile_exprs([self.L], self.jet_variables)

    @cached_property
    def momentum_fn(self) -> Callable[..., np.ndarray]:
        """(x, u, y) -> flattened dL/dy"""
        return compile_exprs(list(self.L_y.flat), self.jet_variables)

    @cached_property
    def hessian_fn(self) -> Callable[..., np.ndarray]:
        return compile_exprs(list(self.hessian_exprs.flat), self.jet_variables)

    @cached_property
    def energy_fn(self) -> Callable[..., np.ndarray]:
        return compile_exprs([self.energy_expr], self.jet_variables)


def mu_names(spec: FibrationSpec) -> List[str]:
    """Multimomentum coordinates mu^a_alpha in alpha-major order"""
    return [mu_name(alpha, a) for alpha in range(spec.k) for a in range(spec.r)]


def jet_values(spec: FibrationSpec, p: JetPoint) -> np.ndarray:
    """Flat (x, u, y) vector in jet_coords order"""
    return np.concatenate([np.asarray(p.x, float).ravel(), np.asarray(p.u, float).ravel(), np.asarray(p.y, float).ravel()])


# ==================== VERTICAL ENDOMORPHISM ====================

@dataclass(frozen=True, eq=False)
class VerticalEndomorphism:
    """S = theta^alpha (x) e_a (x) V^a_alpha and its volume-valued version S_omega"""
    spec: FibrationSpec

    @cached_property
    def contact(self) -> List[AlgebroidForm]:
        return contact_basis(self.spec)

    @property
    def rank(self) -> int:
        return self.spec.rank + self.spec.k * self.spec.r

    def component(self, a: int, Z: Sequence) -> List[ScalarExpr]:
        """S^a(Z) = theta^alpha(Z) V^a_alpha"""
        out = [ZERO] * self.rank
        for alpha, theta in enumerate(self.contact):
            out[v_index(self.spec, alpha, a)] = evaluate_form(theta, [Z])
        return out

    def volume_valued(self, df: AlgebroidForm) -> AlgebroidForm:
        """S_omega(df) = df(V^a_alpha) theta^alpha ^ omega_a"""
        faces = volume_faces(self.spec)
        result = AlgebroidForm.zero(self.spec.r, self.rank)
        for alpha, theta in enumerate(self.contact):
            for a in range(self.spec.r):
                coefficient = evaluate_form(df, [unit_section(self.rank, v_index(self.spec, alpha, a))])
                if coefficient != ZERO:
                    result = result + wedge(theta, faces[a]).scale(coefficient)
        return result


def vertical_endomorphism(spec: FibrationSpec) -> VerticalEndomorphism:
    return VerticalEndomorphism(spec)


def volume_form(spec: FibrationSpec) -> AlgebroidForm:
    """omega = X^1 ^ ... ^ X^r"""
    n = spec.rank + spec.k * spec.r
    return wedge_all([AlgebroidForm.covector(n, a) for a in range(spec.r)], n)


def volume_faces(spec: FibrationSpec) -> List[AlgebroidForm]:
    """omega_a = i_{X_a} omega"""
    n = spec.rank + spec.k * spec.r
    omega = volume_form(spec)
    return [contraction(unit_section(n, a), omega) for a in range(spec.r)]


# ==================== CARTAN FORMS ====================

def cartan_form(model: ModelSpec) -> AlgebroidForm:
    """Theta_L = S_omega(dL) + L omega"""
    dL = function_differential(model.prolongation, model.L)
    theta = vertical_endomorphism(model.spec).volume_valued(dL)
    return theta + volume_form(model.spec).scale(model.L)


def multisymplectic_form(model: ModelSpec) -> AlgebroidForm:
    """Omega_L = -d Theta_L"""
    return -differential(model.prolongation, cartan_form(model))


# ==================== EULER-LAGRANGE ====================

def _euler_lagrange(model: ModelSpec) -> List[ScalarExpr]:
    spec = model.spec
    Z_vert, _, _ = z_functions(spec)
    out = []
    for alpha in range(spec.k):
        terms = []
        for a in range(spec.r):
            p = model.L_y[alpha, a]
            terms.append(total_derivative(spec, p, a))
            terms.append(mul(p, spec.bracket_trace(a)))
            for gamma in range(spec.k):
                terms.append(neg(mul(model.L_y[gamma, a], Z_vert[a, alpha, gamma])))
        for A in range(spec.nu):
            terms.append(neg(mul(model.L_u[A], spec.rho_Ealpha[alpha, A])))
        out.append(total(terms))
    return out


def el_symbolic(model: ModelSpec) -> List[ScalarExpr]:
    """k residuals in (x, u, y, yd)"""
    return list(model.el_exprs)


def el_residual(model: ModelSpec, p2: SecondJetPoint) -> np.ndarray:
    exprs = np.empty(len(model.el_exprs), dtype=object)
    exprs[:] = model.el_exprs
    return evaluate_array(exprs, p2.env(model.spec))


def lagrangian_system(model: ModelSpec) -> Dict[str, np.ndarray]:
    """The three blocks a solution must annihilate: admissibility, morphism, Euler-Lagrange"""
    el = np.empty(len(model.el_exprs), dtype=object)
    el[:] = model.el_exprs
    return {
        "admissibility": admissibility_block(model.spec),
        "morphism": morphism_block(model.spec),
        "euler_lagrange": el,
    }


# ==================== REGULARITY ====================

class HessianResult(NamedTuple):
    matrix: np.ndarray
    regular: bool


def is_regular(matrix: np.ndarray, threshold: Optional[float] = None) -> bool:
    """|det H| > threshold * max|H|^n; the zero matrix is singular"""
    threshold = settings.regularity_threshold if threshold is None else threshold
    n = matrix.shape[0]
    if n == 0:
        return True
    scale = float(np.max(np.abs(matrix)))
    if scale == 0.0 or not np.isfinite(scale):
        return False
    return bool(abs(np.linalg.det(matrix)) > threshold * scale ** n)


def hessian(model: ModelSpec, p: JetPoint, threshold: Optional[float] = None) -> HessianResult:
    p.env(model.spec)
    n = model.spec.k * model.spec.r
    matrix = model.hessian_fn(*jet_values(model.spec, p)).reshape(n, n)
    return HessianResult(matrix, is_regular(matrix, threshold))


# ==================== SYMMETRIES ====================

def invariance_defect(model: ModelSpec, sigma: SectionExpr) -> ScalarExpr:
    """rho(sigma^(1)) L on the prolongation"""
    lift = complete_lift(model.spec, sigma)
    return model.prolongation.rho_section(lift, model.L)


def noether_current(model: ModelSpec, sigma: SectionExpr) -> AlgebroidForm:
    """i_{sigma^(1)} Theta_L"""
    lift = complete_lift(model.spec, sigma)
    return contraction(lift, cartan_form(model))


def energy(model: ModelSpec) -> ScalarExpr:
    """E_L = dL/dy . y - L"""
    return model.energy_expr
