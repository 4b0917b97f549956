"""
Built-in models: standard first-order field theory (with or without an Ehresmann connection),
rigid body on so(3), Poisson sigma model and Atiyah (Euler-Poincare) reductions
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.algebroid import FibrationSpec, SectionExpr, lie_algebra, validate
from app.errors import PresetError
from app.expr import (
    HALF, ONE, ZERO, ScalarExpr, Var, add, as_expr, div, evaluate, mu_name, mul, neg, power, sub, total, u_name,
    x_name, y_name, zeros,
)
from app.hamiltonian import hamilton_symbolic
from app.lagrangian import ModelSpec, lagrangian_system
from config.settings import settings

logger = logging.getLogger(__name__)


# ==================== TYPES ====================

@dataclass(frozen=True, eq=False)
class Identity:
    """Named expectation: block[index] must equal `expected` identically"""
    name: str
    block: str
    index: Tuple[int, ...]
    expected: ScalarExpr


@dataclass(frozen=True, eq=False)
class Preset:
    name: str
    model: ModelSpec
    doc: str = ""
    identities: Tuple[Identity, ...] = field(default_factory=tuple)


def _identity(name: str, block: str, index: Sequence[int], expected: str) -> Identity:
    return Identity(name, block, tuple(index), as_expr(expected))


def _square(e: ScalarExpr) -> ScalarExpr:
    return power(e, as_expr(2))


def _levi_civita() -> List[List[List[int]]]:
    eps = [[[0] * 3 for _ in range(3)] for _ in range(3)]
    for (a, b, c), sign in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1, (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}.items():
        eps[a][b][c] = sign
    return eps


def _checked(preset: Preset, error: bool = False) -> Preset:
    report = validate(preset.model.spec, tol=settings.validate_tol)
    if not report.passed:
        message = (f"Preset '{preset.name}' violates the structure equations "
                   f"(anchor {report.max_anchor_residual:.3e}, Jacobi {report.max_jacobi_residual:.3e})")
        if error:
            raise PresetError(message)
        logger.warning(message)
    return preset


# ==================== STANDARD FIELD THEORY ====================

def preset_standard(nx: int, nu: int, potential=None, connection=None, lagrangian=None,
                    name: str = "standard", check: bool = True) -> Preset:
    """E = TM over N with frame e_i = d/dx^i + Gamma^A_i d/du^A, e_A = d/du^A

    connection[A][i] = Gamma^A_i; the default Lagrangian is 1/2 sum (y^A_i)^2 - V(u).
    """
    V = as_expr(potential) if potential is not None else ZERO
    Gamma = np.empty((nu, nx), dtype=object)
    for A in range(nu):
        for i in range(nx):
            Gamma[A, i] = as_expr(connection[A][i]) if connection is not None else ZERO
    identity = lambda n: [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]

    rho_Ea = zeros((nx, nu))
    C_mix1 = zeros((nx, nu, nu))
    C_mix0 = zeros((nx, nx, nu))
    for i in range(nx):
        for A in range(nu):
            rho_Ea[i, A] = Gamma[A, i]
            for B in range(nu):
                C_mix1[i, B, A] = neg(Gamma[A, i].diff(u_name(B)))
    for i in range(nx):
        for j in range(nx):
            for A in range(nu):
                terms = [Gamma[A, j].diff(x_name(i)), neg(Gamma[A, i].diff(x_name(j)))]
                for B in range(nu):
                    terms.append(mul(Gamma[B, i], Gamma[A, j].diff(u_name(B))))
                    terms.append(neg(mul(Gamma[B, j], Gamma[A, i].diff(u_name(B)))))
                C_mix0[i, j, A] = total(terms)

    spec = FibrationSpec.build(
        nx, nu, nx, nu, name=name,
        rho_F=identity(nx), rho_Ea=rho_Ea, rho_Ealpha=identity(nu), C_mix0=C_mix0, C_mix1=C_mix1,
    )
    kinetic = mul(HALF, total(_square(Var(y_name(A, i))) for A in range(nu) for i in range(nx)))
    H = None
    if lagrangian is None:
        L = sub(kinetic, V)
        momenta = mul(HALF, total(_square(Var(mu_name(A, i))) for A in range(nu) for i in range(nx)))
        H = add(momenta, V)
    else:
        L = as_expr(lagrangian)
    model = ModelSpec(spec, L, H, name=name, description="First-order field theory on a trivial bundle")

    identities = []
    for A in range(nu):
        for i in range(nx):
            identities.append(_identity(
                f"admissibility[{A}][{i}]", "admissibility", (A, i),
                f"ud{A + 1}_{i + 1} - ({Gamma[A, i]}) - y{A + 1}_{i + 1}",
            ))
    if lagrangian is None and connection is None:
        for A in range(nu):
            laplace = " + ".join(f"yd{A + 1}_{i + 1}_{i + 1}" for i in range(nx))
            force = V.diff(u_name(A))
            identities.append(_identity(f"euler_lagrange[{A}]", "euler_lagrange", (A,), f"{laplace} + ({force})"))
            for i in range(nx):
                for j in range(i + 1, nx):
                    identities.append(_identity(
                        f"morphism[{A}][{i}][{j}]", "morphism", (A, i, j),
                        f"yd{A + 1}_{j + 1}_{i + 1} - yd{A + 1}_{i + 1}_{j + 1}",
                    ))
    doc = "Standard first-order field theory" + (" with an Ehresmann connection" if connection is not None else "")
    return _checked(Preset(name, model, doc, tuple(identities)), error=check)


# ==================== MECHANICS ON so(3) ====================

def preset_so3(I1=1, I2=2, I3=3, name: str = "so3", currents: Sequence[Tuple[str, Sequence]] = (),
               check: bool = True) -> Preset:
    """Rigid body: time line times so(3) over a point, L = 1/2 sum I_alpha (y^alpha)^2

    currents: (name, vertical coefficients) pairs reported by simulate.
    """
    inertia = [as_expr(I) for I in (I1, I2, I3)]
    for j, I in enumerate(inertia):
        value = evaluate(I, {})
        if not value > 0:
            raise PresetError(f"Inertia I{j + 1} must be positive, got {value}")
    spec = FibrationSpec.build(1, 0, 1, 3, name=name, rho_F=[[ONE]], C_vert=_levi_civita())
    L = mul(HALF, total(mul(inertia[a], _square(Var(y_name(a, 0)))) for a in range(3)))
    H = mul(HALF, total(div(_square(Var(mu_name(a, 0))), inertia[a]) for a in range(3)))
    sections = tuple((label, SectionExpr.of(spec, vertical=coeffs)) for label, coeffs in currents)
    model = ModelSpec(spec, L, H, name=name, description="Free rigid body (Euler equations)", currents=sections)

    identities = []
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        # I_a dy_a/dt + (I_c - I_b) y_b y_c
        coupling = sub(inertia[c], inertia[b])
        expected = add(mul(inertia[a], Var(f"yd{a + 1}_1_1")), mul(coupling, mul(Var(y_name(b, 0)), Var(y_name(c, 0)))))
        identities.append(Identity(f"euler_lagrange[{a}]", "euler_lagrange", (a,), expected))
        rate = sub(div(ONE, inertia[b]), div(ONE, inertia[c]))
        expected = add(Var(f"mud{a + 1}_1_1"), mul(rate, mul(Var(mu_name(b, 0)), Var(mu_name(c, 0)))))
        identities.append(Identity(f"hamilton_iii[{a}]", "hamilton_iii", (a,), expected))
    preset = Preset(name, model, "Rigid body on so(3) over the time line", tuple(identities))
    return _checked(preset, error=check)


def lie_algebra_so3(name: str = "lie_algebra_so3", check: bool = True) -> Preset:
    """so(3) as a Lie algebroid over a point"""
    spec = lie_algebra(_levi_civita(), name=name)
    model = ModelSpec(spec, ZERO, name=name, description="The Lie algebra so(3)")
    return _checked(Preset(name, model, "Lie algebra so(3) over a point"), error=check)


# ==================== POISSON SIGMA MODEL ====================

def preset_poisson_sigma(Lambda, name: str = "poisson_sigma", check: bool = True) -> Preset:
    """Sigma model on R^2 with target the cotangent algebroid of (R^n, Lambda)

    rho(e_K) = Lambda^{KJ} d/du^J, [e_K, e_L] = dLambda^{KL}/du^J e_J, L = -1/2 Lambda^{JK} y_{J1} y_{K2}.
    """
    n = len(Lambda)
    Lam = np.empty((n, n), dtype=object)
    for J in range(n):
        if len(Lambda[J]) != n:
            raise PresetError(f"Poisson tensor row {J} has {len(Lambda[J])} entries, expected {n}")
        for K in range(n):
            Lam[J, K] = as_expr(Lambda[J][K])
    for J in range(n):
        for K in range(J, n):
            if add(Lam[J, K], Lam[K, J]) != ZERO:
                raise PresetError(f"Poisson tensor is not antisymmetric at ({J}, {K})")

    rho_Ealpha = [[Lam[K, J] for J in range(n)] for K in range(n)]
    C_vert = zeros((n, n, n))
    for K in range(n):
        for Lidx in range(n):
            for J in range(n):
                C_vert[K, Lidx, J] = Lam[K, Lidx].diff(u_name(J))
    identity = [[ONE, ZERO], [ZERO, ONE]]
    spec = FibrationSpec.build(2, n, 2, n, name=name, rho_F=identity, rho_Ealpha=rho_Ealpha, C_vert=C_vert)
    L = mul(neg(HALF), total(mul(Lam[J, K], mul(Var(y_name(J, 0)), Var(y_name(K, 1)))) for J in range(n) for K in range(n)))
    model = ModelSpec(spec, L, name=name, description="Poisson sigma model")

    identities = []
    for J in range(n):
        for a in range(2):
            coupling = total(mul(Lam[J, K], Var(y_name(K, a))) for K in range(n))
            expected = add(Var(f"ud{J + 1}_{a + 1}"), coupling)
            identities.append(Identity(f"admissibility[{J}][{a}]", "admissibility", (J, a), expected))
    preset = Preset(name, model, "Poisson sigma model", tuple(identities))
    return _checked(preset, error=check)


# ==================== ATIYAH ALGEBROIDS ====================

def preset_atiyah(C, connection, curvature=None, inertia: Optional[Sequence] = None, name: str = "atiyah") -> Preset:
    """Reduction by a Lie group: [e_i, e_j] = -Omega^alpha_{ij} e_alpha, [e_i, e_alpha] = 0

    connection[alpha][i] = Gamma^alpha_i; when no curvature is given
    Omega^alpha_{ij} = d_i Gamma^alpha_j - d_j Gamma^alpha_i + C^alpha_{beta gamma} Gamma^beta_i Gamma^gamma_j.
    """
    k = len(C)
    nx = len(connection[0]) if k else 0
    Gamma = [[as_expr(connection[alpha][i]) for i in range(nx)] for alpha in range(k)]
    Cx = [[[as_expr(C[b][g][a]) for a in range(k)] for g in range(k)] for b in range(k)]
    Omega = zeros((k, nx, nx))
    for alpha in range(k):
        for i in range(nx):
            for j in range(nx):
                if curvature is not None:
                    Omega[alpha, i, j] = as_expr(curvature[alpha][i][j])
                    continue
                terms = [Gamma[alpha][j].diff(x_name(i)), neg(Gamma[alpha][i].diff(x_name(j)))]
                terms += [mul(Cx[b][g][alpha], mul(Gamma[b][i], Gamma[g][j])) for b in range(k) for g in range(k)]
                Omega[alpha, i, j] = total(terms)
    C_mix0 = zeros((nx, nx, k))
    for i in range(nx):
        for j in range(nx):
            for alpha in range(k):
                C_mix0[i, j, alpha] = neg(Omega[alpha, i, j])
    identity = [[ONE if i == j else ZERO for j in range(nx)] for i in range(nx)]
    spec = FibrationSpec.build(nx, 0, nx, k, name=name, rho_F=identity, C_mix0=C_mix0, C_vert=Cx)
    weights = [as_expr(I) for I in (inertia if inertia is not None else [1] * k)]
    L = mul(HALF, total(mul(weights[alpha], _square(Var(y_name(alpha, i)))) for alpha in range(k) for i in range(nx)))
    model = ModelSpec(spec, L, name=name, description="Atiyah algebroid of a principal bundle")

    identities = []
    for alpha in range(k):
        for i in range(nx):
            for j in range(i + 1, nx):
                terms = [Var(f"yd{alpha + 1}_{j + 1}_{i + 1}"), neg(Var(f"yd{alpha + 1}_{i + 1}_{j + 1}"))]
                terms += [mul(Cx[b][g][alpha], mul(Var(y_name(b, i)), Var(y_name(g, j)))) for b in range(k) for g in range(k)]
                terms.append(neg(Omega[alpha, i, j]))
                identities.append(Identity(f"morphism[{alpha}][{i}][{j}]", "morphism", (alpha, i, j), total(terms)))
    preset = Preset(name, model, "Atiyah algebroid (Euler-Poincare reduction)", tuple(identities))
    return _checked(preset, error=True)


# ==================== REGISTRY ====================

def _standard() -> Preset:
    return preset_standard(2, 1, potential="1/2*u1^2", name="standard")


def _standard_connection() -> Preset:
    return preset_standard(2, 1, connection=[["x2*u1", "0"]], lagrangian="1/2*(y1_1^2 + y1_2^2) - 1/2*u1^2",
                           name="standard_connection")


def _time_dependent() -> Preset:
    return preset_standard(1, 1, connection=[["sin(x1)"]], lagrangian="1/2*y1_1^2 - 1/2*u1^2", name="time_dependent")


PRESETS: Dict[str, Callable[[], Preset]] = {
    "so3": lambda: preset_so3(1, 2, 3),
    "symmetric_top": lambda: preset_so3(1, 1, 3, name="symmetric_top", currents=[("J3", ["0", "0", "1"])]),
    "lie_algebra_so3": lie_algebra_so3,
    "standard": _standard,
    "standard_connection": _standard_connection,
    "harmonic_oscillator": lambda: preset_standard(1, 1, potential="1/2*u1^2", name="harmonic_oscillator"),
    "free_particle": lambda: preset_standard(1, 1, name="free_particle"),
    "time_dependent": _time_dependent,
    "poisson_sigma": lambda: preset_poisson_sigma([["0", "1"], ["-1", "0"]]),
    "atiyah": lambda: preset_atiyah(_levi_civita(), [["0", "0"]] * 3, inertia=[1, 2, 3]),
    "atiyah_u1": lambda: preset_atiyah([[[0]]], [["-x2/2", "x1/2"]], name="atiyah_u1"),
}


def list_presets() -> List[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> Preset:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise PresetError(f"Unknown preset '{name}'. Available: {', '.join(list_presets())}")
    return factory()


# ==================== IDENTITIES ====================

def preset_blocks(preset: Preset) -> Dict[str, np.ndarray]:
    blocks = {}
    if preset.model.lagrangian is not None:
        blocks.update(lagrangian_system(preset.model))
    if preset.model.hamiltonian is not None:
        blocks.update(hamilton_symbolic(preset.model))
    return blocks


def check_identities(preset: Preset, n_points: int = 20, seed: Optional[int] = None) -> Dict[str, float]:
    """Max |block[index] - expected| over seeded random values of every variable involved"""
    rng = np.random.default_rng(settings.random_seed if seed is None else seed)
    blocks = preset_blocks(preset)
    deviations = {}
    for ident in preset.identities:
        derived = blocks[ident.block][ident.index]
        names = sorted(derived.variables | ident.expected.variables)
        env = {name: rng.uniform(settings.sample_low, settings.sample_high, size=n_points) for name in names}
        difference = np.asarray(evaluate(sub(derived, ident.expected), env), dtype=float)
        deviations[ident.name] = float(np.max(np.abs(difference)))
    return deviations
