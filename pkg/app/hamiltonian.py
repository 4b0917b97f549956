"""
Hamiltonian side: multimomentum coordinates, canonical forms, Hamilton field equations,
the Legendre transformation and its inverse, and the Lagrangian/Hamiltonian equivalence check
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from app.algebroid import FibrationSpec, SectionExpr, full_structure, total_basis
from app.errors import ConvergenceError, DimensionError, NonVerticalSectionError, SingularHessianError
from app.exterior import AlgebroidForm, AnchoredBasisSpec, BundleMapExpr, differential, pullback, wedge
from app.expr import (
    MU0, ONE, ZERO, ScalarExpr, Var, add, evaluate_array, map_array, mu_name, mud_name, mul, neg, sub, total,
    ud_name, x_name, y_name, yd_name, zeros,
)
from app.jet import JetPoint, morphism_block
from app.lagrangian import ModelSpec, is_regular, jet_values, mu_names, volume_faces, volume_form
from app.models import EquivalenceReport
from config.settings import settings

logger = logging.getLogger(__name__)

HAMILTON_BLOCKS = ("hamilton_i", "hamilton_ii", "hamilton_iii")


# ==================== POINTS ====================

@dataclass(frozen=True)
class MomentumPoint:
    """(x, u, mu) on the reduced dual; mu[alpha][a] = mu^a_alpha, mu0 only on the extended dual"""
    x: np.ndarray
    u: np.ndarray
    mu: np.ndarray
    mu0: Optional[float] = None

    def env(self, spec: FibrationSpec) -> Dict[str, Any]:
        x, u, mu = (np.asarray(v, dtype=float) for v in (self.x, self.u, self.mu))
        if x.shape[:1] != (spec.nx,) or u.shape[:1] != (spec.nu,) or mu.shape[:2] != (spec.k, spec.r):
            raise DimensionError(f"Momentum point shapes {x.shape[:1]}, {u.shape[:1]}, {mu.shape[:2]} do not match spec")
        env = {name: x[i] for i, name in enumerate(spec.x_names)}
        env.update({name: u[A] for A, name in enumerate(spec.u_names)})
        for alpha in range(spec.k):
            for a in range(spec.r):
                env[mu_name(alpha, a)] = mu[alpha, a]
        if self.mu0 is not None:
            env[MU0] = self.mu0
        return env


# ==================== DUAL PROLONGATION ====================

def _momentum_basis(spec: FibrationSpec, extended: bool) -> AnchoredBasisSpec:
    """{X_a, X_alpha, [P_0,] P^alpha_a} over (x, u, [mu0,] mu); P brackets vanish"""
    moments = ([MU0] if extended else []) + mu_names(spec)
    coords = spec.coords + moments
    base = total_basis(spec)
    n = spec.rank + len(moments)
    anchor = zeros((n, len(coords)))
    for A in range(spec.rank):
        for J in range(base.n_coords):
            anchor[A, J] = base.anchor[A, J]
    for j in range(len(moments)):
        anchor[spec.rank + j, base.n_coords + j] = ONE
    C = zeros((n, n, n))
    C_full = full_structure(spec)
    for idx in np.ndindex(*C_full.shape):
        C[idx] = C_full[idx]
    label = "extended_dual" if extended else "dual_prolongation"
    return AnchoredBasisSpec(tuple(coords), anchor, C, name=f"{spec.name}:{label}")


def dual_prolongation_spec(spec: FibrationSpec) -> AnchoredBasisSpec:
    return _momentum_basis(spec, extended=False)


def extended_dual_spec(spec: FibrationSpec) -> AnchoredBasisSpec:
    return _momentum_basis(spec, extended=True)


def _faces(spec: FibrationSpec, n: int):
    """omega and omega_a as forms of rank n whose leading basis is X_a"""
    omega = volume_form(spec)
    size = spec.rank + spec.k * spec.r
    if n == size:
        return omega, volume_faces(spec)
    lift = lambda form: AlgebroidForm.build(form.degree, n, form.coeffs.items())
    return lift(omega), [lift(f) for f in volume_faces(spec)]


def canonical_forms(spec: FibrationSpec, H: ScalarExpr) -> Tuple[AlgebroidForm, AlgebroidForm]:
    """Theta_h = mu^a_alpha X^alpha ^ omega_a - H omega and Omega_h = -d Theta_h"""
    basis = dual_prolongation_spec(spec)
    n = basis.n_fiber
    omega, faces = _faces(spec, n)
    theta = omega.scale(neg(H))
    for alpha in range(spec.k):
        for a in range(spec.r):
            X = AlgebroidForm.covector(n, spec.r + alpha)
            theta = theta + wedge(X, faces[a]).scale(Var(mu_name(alpha, a)))
    return theta, -differential(basis, theta)


def multimomentum_form(spec: FibrationSpec) -> AlgebroidForm:
    """Theta = mu0 omega + mu^a_alpha X^alpha ^ omega_a on the extended dual"""
    basis = extended_dual_spec(spec)
    n = basis.n_fiber
    omega, faces = _faces(spec, n)
    theta = omega.scale(Var(MU0))
    for alpha in range(spec.k):
        for a in range(spec.r):
            theta = theta + wedge(AlgebroidForm.covector(n, spec.r + alpha), faces[a]).scale(Var(mu_name(alpha, a)))
    return theta


def legendre_map(model: ModelSpec) -> BundleMapExpr:
    """Extended Legendre map (x, u, y) -> (x, u, E, dL/dy) as a bundle map of the anchored bases"""
    spec = model.spec
    source = model.prolongation
    target = extended_dual_spec(spec)
    mu0 = sub(model.L, total(mul(model.L_y[alpha, a], Var(y_name(alpha, a))) for alpha in range(spec.k) for a in range(spec.r)))
    base_map = tuple([Var(c) for c in spec.coords] + [mu0] + list(model.L_y.flat))
    fiber = zeros((target.n_fiber, source.n_fiber))
    for A in range(spec.rank):
        fiber[A, A] = ONE
    for j, f in enumerate(base_map[len(spec.coords):]):
        for B in range(source.n_fiber):
            fiber[spec.rank + j, B] = source.rho(B, f)
    return BundleMapExpr(base_map, fiber)


def legendre_pullback(model: ModelSpec) -> AlgebroidForm:
    """Pullback of the canonical multimomentum form; equals Theta_L"""
    phi = legendre_map(model)
    return pullback(phi, multimomentum_form(model.spec), model.prolongation, extended_dual_spec(model.spec))


# ==================== HAMILTON EQUATIONS ====================

def _H_partials(model: ModelSpec) -> Tuple[np.ndarray, list]:
    spec = model.spec
    Hm = zeros((spec.k, spec.r))
    for alpha in range(spec.k):
        for a in range(spec.r):
            Hm[alpha, a] = model.H.diff(mu_name(alpha, a))
    Hu = [model.H.diff(name) for name in spec.u_names]
    return Hm, Hu


def _total_x(spec: FibrationSpec, g: ScalarExpr, i: int) -> ScalarExpr:
    """D_i g along a section (u(x), mu(x)) with formal first derivatives"""
    terms = [g.diff(x_name(i))]
    terms += [mul(g.diff(name), Var(ud_name(A, i))) for A, name in enumerate(spec.u_names)]
    for alpha in range(spec.k):
        for a in range(spec.r):
            partial = g.diff(mu_name(alpha, a))
            if partial != ZERO:
                terms.append(mul(partial, Var(mud_name(alpha, a, i))))
    return total(terms)


def hamilton_symbolic(model: ModelSpec) -> Dict[str, np.ndarray]:
    """Hamilton field equations (i)-(iii) in (x, u, mu, ud, mud)"""
    spec = model.spec
    Hm, Hu = _H_partials(model)

    block_i = zeros((spec.nu, spec.r))
    for A in range(spec.nu):
        for a in range(spec.r):
            lhs = total(mul(spec.rho_F[a, i], Var(ud_name(A, i))) for i in range(spec.nx))
            rhs = add(spec.rho_Ea[a, A], total(mul(spec.rho_Ealpha[alpha, A], Hm[alpha, a]) for alpha in range(spec.k)))
            block_i[A, a] = sub(lhs, rhs)

    mapping = {y_name(alpha, a): Hm[alpha, a] for alpha in range(spec.k) for a in range(spec.r)}
    for beta in range(spec.k):
        for b in range(spec.r):
            derivatives = [_total_x(spec, Hm[beta, b], i) for i in range(spec.nx)]
            for a in range(spec.r):
                mapping[yd_name(beta, b, a)] = total(mul(spec.rho_F[a, i], derivatives[i]) for i in range(spec.nx))
    block_ii = map_array(lambda e: e.substitute(mapping), morphism_block(spec))

    block_iii = np.empty(spec.k, dtype=object)
    for alpha in range(spec.k):
        terms = []
        for c in range(spec.r):
            terms.append(total(mul(spec.rho_F[c, i], Var(mud_name(alpha, c, i))) for i in range(spec.nx)))
            terms.append(mul(Var(mu_name(alpha, c)), spec.bracket_trace(c)))
        terms += [mul(spec.rho_Ealpha[alpha, A], Hu[A]) for A in range(spec.nu)]
        for c in range(spec.r):
            for gamma in range(spec.k):
                Z = add(spec.C_mix1[c, alpha, gamma], total(mul(spec.C_vert[beta, alpha, gamma], Hm[beta, c]) for beta in range(spec.k)))
                terms.append(neg(mul(Var(mu_name(gamma, c)), Z)))
        block_iii[alpha] = total(terms)

    return {"hamilton_i": block_i, "hamilton_ii": block_ii, "hamilton_iii": block_iii}


def hamilton_derivative_names(spec: FibrationSpec):
    ud = [ud_name(A, i) for A in range(spec.nu) for i in range(spec.nx)]
    mud = [mud_name(alpha, a, i) for alpha in range(spec.k) for a in range(spec.r) for i in range(spec.nx)]
    return ud + mud


def hamilton_residual(model: ModelSpec, values: Dict[str, Any]) -> Dict[str, np.ndarray]:
    """Evaluate (i)-(iii) given x, u, mu and the derivative symbols ud, mud"""
    missing = [name for name in hamilton_derivative_names(model.spec) if name not in values]
    if missing:
        raise DimensionError(f"Missing derivative data: {', '.join(missing)}")
    return {name: evaluate_array(block, values) for name, block in hamilton_symbolic(model).items()}


def hamilton_values(spec: FibrationSpec, env: Dict[str, Any], mu: np.ndarray, Hm: np.ndarray, Hu: np.ndarray,
                    u_dx: np.ndarray, mu_dx: np.ndarray, Hm_dx: np.ndarray) -> Dict[str, np.ndarray]:
    """Hamilton equations (i)-(iii) from numeric data; trailing axes index the evaluation nodes

    mu, Hm: (k, r, ...), Hu: (nu, ...), u_dx: (nu, nx, ...), mu_dx and Hm_dx: (k, r, nx, ...).
    """
    node_shape = np.shape(mu)[2:]
    ev = lambda arr: np.broadcast_to(evaluate_array(arr, env), arr.shape + node_shape) if arr.size else np.zeros(arr.shape + node_shape)
    rho_F, rho_Ea, rho_Ealpha = ev(spec.rho_F), ev(spec.rho_Ea), ev(spec.rho_Ealpha)
    C_bas, C_mix0, C_mix1, C_vert = ev(spec.C_bas), ev(spec.C_mix0), ev(spec.C_mix1), ev(spec.C_vert)

    block_i = (np.einsum("ai...,Ai...->Aa...", rho_F, u_dx) - np.einsum("aA...->Aa...", rho_Ea)
               - np.einsum("xA...,xa...->Aa...", rho_Ealpha, Hm))

    rho_Hm = np.einsum("bi...,gci...->gcb...", rho_F, Hm_dx)  # rho_b(Hm^g_c)
    block_ii = (np.einsum("gcb...->gbc...", rho_Hm) - rho_Hm
                - np.einsum("ga...,bca...->gbc...", Hm, C_bas)
                + np.einsum("xyg...,xb...,yc...->gbc...", C_vert, Hm, Hm)
                + np.einsum("byg...,yc...->gbc...", C_mix1, Hm)
                - np.einsum("cyg...,yb...->gbc...", C_mix1, Hm)
                + np.einsum("bcg...->gbc...", C_mix0))

    trace = np.einsum("bab...->a...", C_bas)
    Z = C_mix1 + np.einsum("xyg...,xc...->cyg...", C_vert, Hm)
    block_iii = (np.einsum("ci...,yci...->y...", rho_F, mu_dx)
                 + np.einsum("ya...,a...->y...", mu, trace)
                 + np.einsum("yA...,A...->y...", rho_Ealpha, Hu)
                 - np.einsum("gc...,cyg...->y...", mu, Z))
    return {"hamilton_i": block_i, "hamilton_ii": block_ii, "hamilton_iii": block_iii}


def momentum_map(spec: FibrationSpec, sigma: SectionExpr) -> List[ScalarExpr]:
    """J^a = mu^a_alpha sigma^alpha for a vertical section"""
    if not sigma.vertical:
        raise NonVerticalSectionError()
    vertical = sigma.vertical_part
    return [total(mul(vertical[alpha], Var(mu_name(alpha, a))) for alpha in range(spec.k)) for a in range(spec.r)]


# ==================== LEGENDRE TRANSFORMATION ====================

def legendre(model: ModelSpec, p) -> MomentumPoint:
    """mu^a_alpha = dL/dy^alpha_a, mu0 = L - dL/dy . y"""
    spec = model.spec
    p.env(spec)
    values = jet_values(spec, p)
    mu = model.momentum_fn(*values).reshape(spec.k, spec.r)
    y = np.asarray(p.y, dtype=float).reshape(spec.k, spec.r)
    mu0 = float(model.lagrangian_fn(*values)[0] - np.sum(mu * y))
    return MomentumPoint(np.asarray(p.x, float), np.asarray(p.u, float), mu, mu0)


def legendre_inverse(model: ModelSpec, q: MomentumPoint, y_init=None, tol: Optional[float] = None,
                     max_iter: Optional[int] = None):
    """Damped Newton on y -> dL/dy - mu; the step halves while the residual does not decrease"""
    spec = model.spec
    q.env(spec)
    max_iter = settings.newton_max_iter if max_iter is None else max_iter
    target = np.asarray(q.mu, dtype=float).ravel()
    tol = (settings.newton_tol if tol is None else tol) * (1.0 + float(np.linalg.norm(target)))
    head = np.concatenate([np.asarray(q.x, float).ravel(), np.asarray(q.u, float).ravel()])
    n = target.size
    if y_init is None:
        y = np.zeros(n)
    else:
        y = np.asarray(getattr(y_init, "y", y_init), dtype=float).ravel().copy()

    def residual(y_vec):
        return model.momentum_fn(*head, *y_vec) - target

    F = residual(y)
    norm = float(np.linalg.norm(F))
    for _ in range(max_iter):
        if norm <= tol:
            break
        H = model.hessian_fn(*head, *y).reshape(n, n)
        if not is_regular(H):
            raise SingularHessianError("Singular Hessian in Legendre inversion")
        step = lu_solve(lu_factor(H), F)
        t = 1.0
        while True:
            y_new = y - t * step
            F_new = residual(y_new)
            norm_new = float(np.linalg.norm(F_new))
            if norm_new < norm or t <= settings.newton_min_step:
                break
            t /= 2.0
        y, F, norm = y_new, F_new, norm_new
    if not norm <= tol:
        raise ConvergenceError("Legendre inversion did not converge", norm)
    return JetPoint(np.asarray(q.x, float), np.asarray(q.u, float), y.reshape(spec.k, spec.r))


def hamiltonian_from_L(model: ModelSpec, q: MomentumPoint, y_init=None) -> float:
    """H = <mu, y(mu)> - L(x, u, y(mu))"""
    p = legendre_inverse(model, q, y_init)
    values = jet_values(model.spec, p)
    return float(np.sum(np.asarray(q.mu, float).ravel() * p.y.ravel()) - model.lagrangian_fn(*values)[0])


# ==================== EQUIVALENCE ====================

def equivalence_check(model: ModelSpec, field, tol: Optional[float] = None,
                      include_boundary: Optional[bool] = None) -> EquivalenceReport:
    """Map a Lagrangian field through the Legendre transform and evaluate the Hamilton equations on it"""
    from app import fields

    spec = model.spec
    tol = settings.default_tol if tol is None else tol
    include_boundary = settings.include_boundary if include_boundary is None else include_boundary
    if field.y is None:
        raise DimensionError("Equivalence check needs a Lagrangian field (y values)")
    grid = field.grid
    env = fields.node_env(spec, field)
    mu = fields.grid_values(model.L_y, env, grid)

    y_back = np.empty_like(field.y)
    mesh = grid.mesh()
    for node in np.ndindex(*grid.shape):
        x = np.array([m[node] for m in mesh])
        q = MomentumPoint(x, field.u[(slice(None),) + node], mu[(slice(None), slice(None)) + node])
        guess = field.y[(slice(None), slice(None)) + node]
        y_back[(slice(None), slice(None)) + node] = legendre_inverse(model, q, guess).y
    roundtrip = float(np.max(np.abs(y_back - field.y))) if y_back.size else 0.0

    # dH/dmu = y and dH/du = -dL/du at the Legendre point; hamiltonian_from_L only gives the value
    back_env = dict(env)
    for alpha in range(spec.k):
        for a in range(spec.r):
            back_env[y_name(alpha, a)] = y_back[alpha, a]
    Hu = -fields.grid_values(np.array(model.L_u, dtype=object), back_env, grid)

    values = hamilton_values(
        spec, env, mu, y_back, Hu,
        fields.fd_gradient(grid, field.u), fields.fd_gradient(grid, mu), fields.fd_gradient(grid, y_back),
    )
    mask = grid.interior_mask(include_boundary)
    blocks = [fields.block_stats(name, values[name], mask, tol, upper=(name == "hamilton_ii")) for name in HAMILTON_BLOCKS]
    worst = max((b.max for b in blocks), default=0.0)
    logger.info("equivalence check: max Hamilton residual %.3e, Legendre round trip %.3e", worst, roundtrip)
    return EquivalenceReport(
        passed=all(b.passed for b in blocks),
        tol=tol,
        n_nodes=int(np.count_nonzero(mask)),
        max_residual=worst,
        blocks=blocks,
        max_legendre_roundtrip=roundtrip,
    )
