"""
Jet layer: jet coordinates, the prolongation basis, total derivatives, affine structure functions,
contact forms, the holonomy defect and section admissibility/morphism residuals
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.algebroid import FibrationSpec, SectionExpr, full_structure, total_basis
from app.errors import DimensionError, NonVerticalSectionError
from app.exterior import AlgebroidForm, AnchoredBasisSpec, BundleMapExpr
from app.expr import (
    ONE, ZERO, Env, ScalarExpr, Var, add, as_expr, evaluate_array, expr_array, map_array, mul, neg, sub, total,
    ud_name, x_name, y_name, yd_name, zeros,
)
from config.settings import settings


# ==================== POINTS ====================

@dataclass(frozen=True)
class JetPoint:
    """Adapted coordinates (x, u, y); y[alpha][a] = y^alpha_a"""
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray

    def env(self, spec: FibrationSpec) -> Dict[str, Any]:
        x, u, y = (np.asarray(v, dtype=float) for v in (self.x, self.u, self.y))
        if x.shape[:1] != (spec.nx,) or u.shape[:1] != (spec.nu,) or y.shape[:2] != (spec.k, spec.r):
            raise DimensionError(f"Jet point shapes {x.shape[:1]}, {u.shape[:1]}, {y.shape[:2]} do not match spec")
        env = {name: x[i] for i, name in enumerate(spec.x_names)}
        env.update({name: u[A] for A, name in enumerate(spec.u_names)})
        for alpha in range(spec.k):
            for a in range(spec.r):
                env[y_name(alpha, a)] = y[alpha, a]
        return env


@dataclass(frozen=True)
class SecondJetPoint(JetPoint):
    """y2[beta][b][a] is the derivative of y^beta_b along direction a (symbol yd{beta}_{b}_{a})"""
    y2: np.ndarray = None

    def env(self, spec: FibrationSpec) -> Dict[str, Any]:
        env = super().env(spec)
        y2 = np.asarray(self.y2, dtype=float)
        if y2.shape[:3] != (spec.k, spec.r, spec.r):
            raise DimensionError(f"Second jet has shape {y2.shape[:3]}, spec needs {(spec.k, spec.r, spec.r)}")
        for beta in range(spec.k):
            for b in range(spec.r):
                for a in range(spec.r):
                    env[yd_name(beta, b, a)] = y2[beta, b, a]
        return env


def y_names(spec: FibrationSpec) -> List[str]:
    """Jet coordinates in alpha-major order"""
    return [y_name(alpha, a) for alpha in range(spec.k) for a in range(spec.r)]


def yd_names(spec: FibrationSpec) -> List[str]:
    return [yd_name(beta, b, a) for beta in range(spec.k) for b in range(spec.r) for a in range(spec.r)]


def jet_coords(spec: FibrationSpec) -> List[str]:
    return spec.coords + y_names(spec)


def y_var(alpha: int, a: int) -> Var:
    return Var(y_name(alpha, a))


# ==================== PROLONGATION ====================

def x_index(spec: FibrationSpec, a: int) -> int:
    return a


def xv_index(spec: FibrationSpec, alpha: int) -> int:
    return spec.r + alpha


def v_index(spec: FibrationSpec, alpha: int, a: int) -> int:
    """Position of V^a_alpha in the basis {X_a, X_alpha, V^a_alpha}"""
    return spec.r + spec.k + alpha * spec.r + a


def prolongation_spec(spec: FibrationSpec) -> AnchoredBasisSpec:
    """Anchored basis {X_a, X_alpha, V^a_alpha} over (x, u, y)

    dx^i = rho^i_a X^a, du^A = rho^A_a X^a + rho^A_alpha X^alpha, dy^alpha_a = V^alpha_a;
    X-brackets copy the fibration brackets, every bracket with a V vanishes.
    """
    coords = jet_coords(spec)
    n = spec.rank + spec.k * spec.r
    anchor = zeros((n, len(coords)))
    base = total_basis(spec)
    for A in range(spec.rank):
        for J in range(base.n_coords):
            anchor[A, J] = base.anchor[A, J]
    offset = base.n_coords
    for alpha in range(spec.k):
        for a in range(spec.r):
            anchor[v_index(spec, alpha, a), offset + alpha * spec.r + a] = ONE
    C = zeros((n, n, n))
    C_full = full_structure(spec)
    for idx in np.ndindex(*C_full.shape):
        C[idx] = C_full[idx]
    return AnchoredBasisSpec(tuple(coords), anchor, C, name=f"{spec.name}:prolongation")


def horizontal_section(spec: FibrationSpec, a: int, with_second_jet: bool = False) -> List[ScalarExpr]:
    """X_a + y^beta_a X_beta, plus yd{beta}_{b}_{a} V^b_beta when requested"""
    n = spec.rank + spec.k * spec.r
    out = [ZERO] * n
    out[x_index(spec, a)] = ONE
    for beta in range(spec.k):
        out[xv_index(spec, beta)] = y_var(beta, a)
        if with_second_jet:
            for b in range(spec.r):
                out[v_index(spec, beta, b)] = Var(yd_name(beta, b, a))
    return out


# ==================== TOTAL DERIVATIVE ====================

def u_velocity(spec: FibrationSpec, A: int, a: int) -> ScalarExpr:
    """rho^A_a + rho^A_alpha y^alpha_a"""
    return add(spec.rho_Ea[a, A], total(mul(spec.rho_Ealpha[alpha, A], y_var(alpha, a)) for alpha in range(spec.k)))


def total_derivative(spec: FibrationSpec, f: ScalarExpr, a: int) -> ScalarExpr:
    """f'_{|a} with the formal second-jet term for y-dependent f"""
    f = as_expr(f)
    if not 0 <= a < spec.r:
        raise DimensionError(f"Direction {a} outside 0..{spec.r - 1}")
    terms = [mul(spec.rho_F[a, i], f.diff(name)) for i, name in enumerate(spec.x_names)]
    terms += [mul(u_velocity(spec, A, a), f.diff(name)) for A, name in enumerate(spec.u_names)]
    for beta in range(spec.k):
        for b in range(spec.r):
            partial = f.diff(y_name(beta, b))
            if partial != ZERO:
                terms.append(mul(Var(yd_name(beta, b, a)), partial))
    return total(terms)


def z_functions(spec: FibrationSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Z_vert[a][gamma][alpha] = Z^alpha_{a gamma}, Z_mix[a][c][alpha] = Z^alpha_{ac}, Z_bas[a][c][b] = Z^b_{ac})"""
    r, k = spec.r, spec.k
    Z_vert = zeros((r, k, k))
    Z_mix = zeros((r, r, k))
    for a in range(r):
        for gamma in range(k):
            for alpha in range(k):
                Z_vert[a, gamma, alpha] = add(
                    spec.C_mix1[a, gamma, alpha],
                    total(mul(spec.C_vert[beta, gamma, alpha], y_var(beta, a)) for beta in range(k)),
                )
        for c in range(r):
            for alpha in range(k):
                Z_mix[a, c, alpha] = add(
                    spec.C_mix0[a, c, alpha],
                    total(mul(spec.C_mixed(beta, c, alpha), y_var(beta, a)) for beta in range(k)),
                )
    Z_bas = spec.C_bas.copy()
    return Z_vert, Z_mix, Z_bas


# ==================== CONTACT FORMS ====================

def contact_basis(spec: FibrationSpec) -> List[AlgebroidForm]:
    """theta^alpha = X^alpha - y^alpha_a X^a"""
    n = spec.rank + spec.k * spec.r
    forms = []
    for alpha in range(spec.k):
        items = [((xv_index(spec, alpha),), ONE)]
        items += [((x_index(spec, a),), neg(y_var(alpha, a))) for a in range(spec.r)]
        forms.append(AlgebroidForm.build(1, n, items))
    return forms


# ==================== HOLONOMY ====================

def holonomy_defect_exprs(spec: FibrationSpec) -> np.ndarray:
    """M[gamma][a][b] in the symbols y and yd"""
    r, k = spec.r, spec.k
    y = y_var
    M = zeros((k, r, r))
    for gamma in range(k):
        for a in range(r):
            for b in range(r):
                terms = [
                    Var(yd_name(gamma, a, b)),
                    neg(Var(yd_name(gamma, b, a))),
                    total(mul(spec.C_mix1[b, alpha, gamma], y(alpha, a)) for alpha in range(k)),
                    neg(total(mul(spec.C_mix1[a, beta, gamma], y(beta, b)) for beta in range(k))),
                    neg(total(mul(spec.C_vert[alpha, beta, gamma], mul(y(alpha, a), y(beta, b))) for alpha in range(k) for beta in range(k))),
                    total(mul(y(gamma, c), spec.C_bas[a, b, c]) for c in range(r)),
                    neg(spec.C_mix0[a, b, gamma]),
                ]
                M[gamma, a, b] = total(terms) if a != b else ZERO
    return M


def holonomy_defect(spec: FibrationSpec, p2: SecondJetPoint) -> np.ndarray:
    return evaluate_array(holonomy_defect_exprs(spec), p2.env(spec))


def is_holonomic(spec: FibrationSpec, p2: SecondJetPoint, tol: Optional[float] = None) -> bool:
    tol = settings.holonomy_tol if tol is None else tol
    M = holonomy_defect(spec, p2)
    return bool(M.size == 0 or np.max(np.abs(M)) < tol)


# ==================== SECTIONS ====================

@dataclass(frozen=True, eq=False)
class SectionFieldExpr:
    """Symbolic section of pi: phi[A](x) and y[alpha][a](x)"""
    phi: np.ndarray
    y: np.ndarray

    @classmethod
    def build(cls, spec: FibrationSpec, phi: Sequence, y: Sequence) -> "SectionFieldExpr":
        field = cls(expr_array(list(phi), (spec.nu,), "phi"), expr_array([list(row) for row in y], (spec.k, spec.r), "y"))
        allowed = set(spec.x_names)
        for e in list(field.phi.flat) + list(field.y.flat):
            extra = e.variables - allowed
            if extra:
                raise DimensionError(f"Section components may only depend on x, found {sorted(extra)}")
        return field

    def substitution(self, spec: FibrationSpec) -> Dict[str, ScalarExpr]:
        """u^A -> phi^A(x) and y^alpha_a -> y^alpha_a(x)"""
        mapping = {name: self.phi[A] for A, name in enumerate(spec.u_names)}
        for alpha in range(spec.k):
            for a in range(spec.r):
                mapping[y_name(alpha, a)] = self.y[alpha, a]
        return mapping

    def second_jet(self, spec: FibrationSpec) -> Dict[str, ScalarExpr]:
        """yd{beta}_{b}_{a} -> rho^i_a d y^beta_b / dx^i"""
        mapping = {}
        for beta in range(spec.k):
            for b in range(spec.r):
                for a in range(spec.r):
                    mapping[yd_name(beta, b, a)] = _rho_base(spec, a, self.y[beta, b])
        return mapping


def _rho_base(spec: FibrationSpec, a: int, f: ScalarExpr) -> ScalarExpr:
    return total(mul(spec.rho_F[a, i], f.diff(name)) for i, name in enumerate(spec.x_names))


def _compose(f: ScalarExpr, mapping: Dict[str, ScalarExpr]) -> ScalarExpr:
    return f.substitute(mapping)


def section_admissibility_exprs(spec: FibrationSpec, phi: SectionFieldExpr) -> np.ndarray:
    """residual[A][a] = rho^i_a d phi^A/dx^i - rho^A_a(phi) - rho^A_alpha(phi) phi^alpha_a"""
    sub_map = phi.substitution(spec)
    out = zeros((spec.nu, spec.r))
    for A in range(spec.nu):
        for a in range(spec.r):
            out[A, a] = sub(_rho_base(spec, a, phi.phi[A]), _compose(u_velocity(spec, A, a), sub_map))
    return out


def section_admissibility_residual(spec: FibrationSpec, phi: SectionFieldExpr, p: Env) -> np.ndarray:
    return evaluate_array(section_admissibility_exprs(spec, phi), _point_env(spec, p))


def section_morphism_exprs(spec: FibrationSpec, phi: SectionFieldExpr) -> np.ndarray:
    """residual[alpha][b][c]; equals -M[alpha][b][c] on the honest second jet of the section"""
    mapping = phi.substitution(spec)
    mapping.update(phi.second_jet(spec))
    M = holonomy_defect_exprs(spec)
    out = zeros(M.shape)
    for idx in np.ndindex(*M.shape):
        out[idx] = neg(_compose(M[idx], mapping))
    return out


def section_morphism_residual(spec: FibrationSpec, phi: SectionFieldExpr, p: Env) -> np.ndarray:
    return evaluate_array(section_morphism_exprs(spec, phi), _point_env(spec, p))


def _point_env(spec: FibrationSpec, p) -> Dict[str, Any]:
    if isinstance(p, dict):
        return p
    x = np.asarray(p, dtype=float)
    return {name: x[i] for i, name in enumerate(spec.x_names)}


def section_bundle_map(spec: FibrationSpec, phi: SectionFieldExpr) -> BundleMapExpr:
    """The section as a bundle map F -> E: x -> (x, phi(x)), e_b -> e_b + phi^alpha_b e_alpha"""
    base_map = tuple([Var(x_name(i)) for i in range(spec.nx)] + list(phi.phi))
    fiber = zeros((spec.rank, spec.r))
    for b in range(spec.r):
        fiber[b, b] = ONE
        for alpha in range(spec.k):
            fiber[spec.r + alpha, b] = phi.y[alpha, b]
    return BundleMapExpr(base_map, fiber)


# ==================== COMPLETE LIFT ====================

def complete_lift(spec: FibrationSpec, sigma: SectionExpr) -> List[ScalarExpr]:
    """sigma^(1) = sigma^alpha X_alpha + (sigma'^alpha_{|a} + Z^alpha_{a beta} sigma^beta) V^a_alpha"""
    if len(sigma) != spec.rank:
        raise DimensionError(f"Section needs {spec.rank} coefficients, got {len(sigma)}")
    if not SectionExpr(tuple(sigma), spec.r).vertical:
        raise NonVerticalSectionError()
    values = list(sigma)[spec.r:]
    Z_vert, _, _ = z_functions(spec)
    n = spec.rank + spec.k * spec.r
    out = [ZERO] * n
    for alpha in range(spec.k):
        out[xv_index(spec, alpha)] = values[alpha]
        for a in range(spec.r):
            out[v_index(spec, alpha, a)] = add(
                total_derivative(spec, values[alpha], a),
                total(mul(Z_vert[a, beta, alpha], values[beta]) for beta in range(spec.k)),
            )
    return out


# ==================== FIELD EQUATION BLOCKS ====================

def admissibility_block(spec: FibrationSpec) -> np.ndarray:
    """adm[A][a] = rho^i_a ud{A}_{i} - rho^A_a - rho^A_alpha y^alpha_a"""
    out = zeros((spec.nu, spec.r))
    for A in range(spec.nu):
        for a in range(spec.r):
            lhs = total(mul(spec.rho_F[a, i], Var(ud_name(A, i))) for i in range(spec.nx))
            out[A, a] = sub(lhs, u_velocity(spec, A, a))
    return out


def morphism_block(spec: FibrationSpec) -> np.ndarray:
    """mor[alpha][b][c] = -M[alpha][b][c]; only b < c carries information"""
    return map_array(neg, holonomy_defect_exprs(spec))


def upper_pairs(r: int) -> List[Tuple[int, int]]:
    return [(b, c) for b in range(r) for c in range(b + 1, r)]
