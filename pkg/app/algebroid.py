"""
Lie algebroid fibration data and validation of the structure equations
Anchor application and the bracket of sections in the adapted basis {e_a, e_alpha}
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import DimensionError
from app.exterior import AnchoredBasisSpec, section_bracket
from app.expr import (
    ZERO, Env, ScalarExpr, add, as_expr, evaluate_array, expr_array, mul, neg, total, u_name, x_name, zeros,
)
from app.models import ValidationReport
from config.settings import settings

logger = logging.getLogger(__name__)

Box = Union[Tuple[float, float], Sequence[Tuple[float, float]]]


# ==================== FIBRATION ====================

@dataclass(frozen=True, eq=False)
class FibrationSpec:
    """Coordinate data of the fibration E -> F

    Lower indices come first and the upper index last:
    C_bas[a][b][c] = C^c_{ab}, C_mix0[a][b][alpha] = C^alpha_{ab},
    C_mix1[a][beta][alpha] = C^alpha_{a beta}, C_vert[beta][gamma][alpha] = C^alpha_{beta gamma}.
    The families C^a_{b gamma} and C^a_{beta gamma} vanish and are not stored.
    """
    nx: int
    nu: int
    r: int
    k: int
    rho_F: np.ndarray
    rho_Ea: np.ndarray
    rho_Ealpha: np.ndarray
    C_bas: np.ndarray
    C_mix0: np.ndarray
    C_mix1: np.ndarray
    C_vert: np.ndarray
    name: str = ""

    @classmethod
    def build(cls, nx: int, nu: int, r: int, k: int, name: str = "", **arrays: Any) -> "FibrationSpec":
        """Build from nested lists; missing arrays are zero"""
        for label, value in (("nx", nx), ("nu", nu), ("r", r), ("k", k)):
            if value < 0:
                raise DimensionError(f"{label} must be non-negative, got {value}")
        shapes = cls.shapes(nx, nu, r, k)
        unknown = set(arrays) - set(shapes)
        if unknown:
            raise DimensionError(f"Unknown structure arrays: {', '.join(sorted(unknown))}")
        data = {}
        for key, shape in shapes.items():
            value = arrays.get(key)
            if value is None:
                data[key] = zeros(shape)
            elif isinstance(value, np.ndarray) and value.dtype == object:
                if value.shape != shape:
                    raise DimensionError(f"{key}: expected shape {shape}, got {value.shape}")
                data[key] = value
            else:
                data[key] = expr_array(value, shape, key)
        return cls(nx, nu, r, k, name=name, **data)

    @staticmethod
    def shapes(nx: int, nu: int, r: int, k: int) -> Dict[str, Tuple[int, ...]]:
        return {
            "rho_F": (r, nx),
            "rho_Ea": (r, nu),
            "rho_Ealpha": (k, nu),
            "C_bas": (r, r, r),
            "C_mix0": (r, r, k),
            "C_mix1": (r, k, k),
            "C_vert": (k, k, k),
        }

    @property
    def rank(self) -> int:
        return self.r + self.k

    @property
    def x_names(self) -> List[str]:
        return [x_name(i) for i in range(self.nx)]

    @property
    def u_names(self) -> List[str]:
        return [u_name(A) for A in range(self.nu)]

    @property
    def coords(self) -> List[str]:
        return self.x_names + self.u_names

    def arrays(self) -> Dict[str, np.ndarray]:
        return {key: getattr(self, key) for key in self.shapes(self.nx, self.nu, self.r, self.k)}

    # Structure functions over the mixed index families

    def C_mixed(self, beta: int, c: int, alpha: int) -> ScalarExpr:
        """C^alpha_{beta c} = -C^alpha_{c beta}"""
        return neg(self.C_mix1[c, beta, alpha])

    def bracket_trace(self, a: int) -> ScalarExpr:
        """sum_b C^b_{ba}"""
        return total(self.C_bas[b, a, b] for b in range(self.r))


@dataclass(frozen=True)
class BasePoint:
    x: np.ndarray
    u: np.ndarray

    def env(self, spec: FibrationSpec) -> Dict[str, Any]:
        x = np.asarray(self.x, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if x.shape[:1] != (spec.nx,) or u.shape[:1] != (spec.nu,):
            raise DimensionError(f"Point has {x.shape[:1]} base and {u.shape[:1]} fiber coordinates, spec needs ({spec.nx},) and ({spec.nu},)")
        env = {name: x[i] for i, name in enumerate(spec.x_names)}
        env.update({name: u[A] for A, name in enumerate(spec.u_names)})
        return env


@dataclass(frozen=True, eq=False)
class SectionExpr:
    """Section sigma^a e_a + sigma^alpha e_alpha with coefficients in (x, u)"""
    coeffs: Tuple[ScalarExpr, ...]
    r: int

    @classmethod
    def of(cls, spec: FibrationSpec, base: Sequence = (), vertical: Sequence = ()) -> "SectionExpr":
        base = list(base) or [ZERO] * spec.r
        vertical = list(vertical) or [ZERO] * spec.k
        if len(base) != spec.r or len(vertical) != spec.k:
            raise DimensionError(f"Section needs {spec.r} + {spec.k} coefficients, got {len(base)} + {len(vertical)}")
        return cls(tuple(as_expr(c) for c in base + vertical), spec.r)

    @property
    def vertical(self) -> bool:
        return all(c == ZERO for c in self.coeffs[: self.r])

    @property
    def vertical_part(self) -> Tuple[ScalarExpr, ...]:
        return self.coeffs[self.r:]

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, i):
        return self.coeffs[i]

    def __iter__(self):
        return iter(self.coeffs)


# ==================== TOTAL BASIS ====================

def full_anchor(spec: FibrationSpec) -> np.ndarray:
    """(r+k) x (nx+nu) anchor of the total basis {e_a, e_alpha}"""
    out = zeros((spec.rank, spec.nx + spec.nu))
    for a in range(spec.r):
        for i in range(spec.nx):
            out[a, i] = spec.rho_F[a, i]
        for A in range(spec.nu):
            out[a, spec.nx + A] = spec.rho_Ea[a, A]
    for alpha in range(spec.k):
        for A in range(spec.nu):
            out[spec.r + alpha, spec.nx + A] = spec.rho_Ealpha[alpha, A]
    return out


def full_structure(spec: FibrationSpec) -> np.ndarray:
    """C[A][B][N] over the total basis with the vanishing families filled in"""
    r, k = spec.r, spec.k
    out = zeros((spec.rank, spec.rank, spec.rank))
    for a in range(r):
        for b in range(r):
            for c in range(r):
                out[a, b, c] = spec.C_bas[a, b, c]
            for alpha in range(k):
                out[a, b, r + alpha] = spec.C_mix0[a, b, alpha]
        for beta in range(k):
            for alpha in range(k):
                out[a, r + beta, r + alpha] = spec.C_mix1[a, beta, alpha]
                out[r + beta, a, r + alpha] = neg(spec.C_mix1[a, beta, alpha])
    for beta in range(k):
        for gamma in range(k):
            for alpha in range(k):
                out[r + beta, r + gamma, r + alpha] = spec.C_vert[beta, gamma, alpha]
    return out


def total_basis(spec: FibrationSpec) -> AnchoredBasisSpec:
    return AnchoredBasisSpec(tuple(spec.coords), full_anchor(spec), full_structure(spec), name=spec.name)


def base_basis(spec: FibrationSpec) -> AnchoredBasisSpec:
    """The algebroid F -> N with basis {e_a}"""
    return AnchoredBasisSpec(tuple(spec.x_names), spec.rho_F, spec.C_bas, name=f"{spec.name}:F")


def _as_basis(spec: Union[FibrationSpec, AnchoredBasisSpec]) -> AnchoredBasisSpec:
    return total_basis(spec) if isinstance(spec, FibrationSpec) else spec


# ==================== STRUCTURE EQUATIONS ====================

def structure_residual_exprs(spec: Union[FibrationSpec, AnchoredBasisSpec]) -> Tuple[np.ndarray, np.ndarray]:
    """Symbolic anchor and Jacobi residuals over the assembled total basis"""
    basis = _as_basis(spec)
    R, C, coords = basis.anchor, basis.C, basis.coords
    n, m = basis.n_fiber, basis.n_coords

    anchor_res = zeros((n, n, m))
    for A in range(n):
        for B in range(n):
            for i in range(m):
                lie = add(basis.rho(A, R[B, i]), neg(basis.rho(B, R[A, i])))
                image = total(mul(R[G, i], C[A, B, G]) for G in range(n))
                anchor_res[A, B, i] = add(lie, neg(image))

    def cyclic_term(A, B, Cc, N):
        derivative = basis.rho(A, C[B, Cc, N])
        quadratic = total(mul(C[A, M, N], C[B, Cc, M]) for M in range(n))
        return add(derivative, quadratic)

    jacobi_res = zeros((n, n, n, n))
    for A in range(n):
        for B in range(n):
            for Cc in range(n):
                for N in range(n):
                    jacobi_res[A, B, Cc, N] = total([
                        cyclic_term(A, B, Cc, N), cyclic_term(B, Cc, A, N), cyclic_term(Cc, A, B, N),
                    ])
    return anchor_res, jacobi_res


def structure_residuals(spec: Union[FibrationSpec, AnchoredBasisSpec], p: Union[BasePoint, Env]) -> Tuple[np.ndarray, np.ndarray]:
    """(anchor_res[A,B,i], jacobi_res[A,B,C,N]) evaluated at p"""
    env = p.env(spec) if isinstance(p, BasePoint) else p
    anchor_res, jacobi_res = structure_residual_exprs(spec)
    return evaluate_array(anchor_res, env), evaluate_array(jacobi_res, env)


def sample_points(spec: Union[FibrationSpec, AnchoredBasisSpec], n: Optional[int] = None, box: Optional[Box] = None,
                  seed: Optional[int] = None) -> Dict[str, np.ndarray]:
    """Seeded uniform sample of the coordinates, one array of length n per coordinate"""
    coords = list(spec.coords)
    n = settings.sample_points if n is None else n
    seed = settings.random_seed if seed is None else seed
    bounds = _box_bounds(box, len(coords))
    rng = np.random.default_rng(seed)
    return {name: rng.uniform(lo, hi, size=n) for name, (lo, hi) in zip(coords, bounds)}


def _box_bounds(box: Optional[Box], count: int) -> List[Tuple[float, float]]:
    if box is None:
        return [(settings.sample_low, settings.sample_high)] * count
    box = list(box)
    if len(box) == 2 and all(np.isscalar(v) for v in box):
        return [(float(box[0]), float(box[1]))] * count
    if len(box) != count:
        raise DimensionError(f"Sample box has {len(box)} intervals for {count} coordinates")
    return [(float(lo), float(hi)) for lo, hi in box]


def _stack(spec: Union[FibrationSpec, AnchoredBasisSpec], sample) -> Dict[str, np.ndarray]:
    if isinstance(sample, Mapping):
        return {name: np.atleast_1d(np.asarray(v, dtype=float)) for name, v in sample.items()}
    envs = [p.env(spec) if isinstance(p, BasePoint) else p for p in sample]
    if not envs:
        raise DimensionError("Validation sample is empty")
    return {name: np.array([float(e[name]) for e in envs]) for name in envs[0]}


def _max_abs(values: np.ndarray) -> float:
    return float(np.max(np.abs(values))) if values.size else 0.0


def validate(spec: Union[FibrationSpec, AnchoredBasisSpec], sample=None, tol: Optional[float] = None) -> ValidationReport:
    """Check anchor compatibility, Jacobi and antisymmetry over the sample; failures are reported"""
    tol = settings.validate_tol if tol is None else tol
    env = _stack(spec, sample_points(spec) if sample is None else sample)
    basis = _as_basis(spec)
    anchor_res, jacobi_res = structure_residual_exprs(basis)
    anchor_vals = evaluate_array(anchor_res, env)
    jacobi_vals = evaluate_array(jacobi_res, env)
    antisymmetry = basis.antisymmetry_residual(env)

    max_anchor = _max_abs(anchor_vals)
    max_jacobi = _max_abs(jacobi_vals)
    worst = None
    if jacobi_vals.size and max_jacobi > 0:
        worst = [int(j) for j in np.unravel_index(np.argmax(np.abs(jacobi_vals)), jacobi_vals.shape)[:4]]
    passed = max_anchor < tol and max_jacobi < tol and antisymmetry < tol
    n_points = len(next(iter(env.values()))) if env else 1
    logger.info("validate %s: anchor=%.3e jacobi=%.3e antisymmetry=%.3e", basis.name, max_anchor, max_jacobi, antisymmetry)
    return ValidationReport(
        name=basis.name,
        passed=passed,
        tol=tol,
        n_points=n_points,
        max_anchor_residual=max_anchor,
        max_jacobi_residual=max_jacobi,
        max_antisymmetry_residual=antisymmetry,
        worst_jacobi_index=worst,
    )


# ==================== SECTIONS ====================

def bracket(spec: FibrationSpec, sigma: Sequence, eta: Sequence) -> SectionExpr:
    """Coordinate bracket over the total basis"""
    coeffs = section_bracket(total_basis(spec), list(sigma), list(eta))
    return SectionExpr(tuple(coeffs), spec.r)


def anchor_apply(spec: FibrationSpec, a: Sequence[float], p: Union[BasePoint, Env]) -> np.ndarray:
    """(rho^i_a a^a, rho^A_a a^a + rho^A_alpha a^alpha) at p"""
    a = np.asarray(a, dtype=float)
    if a.shape[0] != spec.rank:
        raise DimensionError(f"Expected {spec.rank} fiber coefficients, got {a.shape[0]}")
    env = p.env(spec) if isinstance(p, BasePoint) else p
    R = evaluate_array(full_anchor(spec), env)
    return np.tensordot(a, R, axes=(0, 0))


def lie_algebra(C, name: str = "lie_algebra") -> FibrationSpec:
    """Pure Lie algebra over a point: nx = nu = r = 0"""
    return FibrationSpec.build(0, 0, 0, len(C), name=name, C_vert=C)
