"""
Discretized field configurations on regular grids, finite-difference prolongation,
residual reports and the one-dimensional (mechanics) integrators
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from app.algebroid import FibrationSpec
from app.errors import DimensionError, IntegrationError, MissingFunctionError, SingularHessianError
from app.expr import ONE, ZERO, compile_exprs, evaluate_array, mu_name, mud_name, ud_name, y_name, yd_name
from app.hamiltonian import hamilton_symbolic
from app.jet import SecondJetPoint, u_velocity
from app.lagrangian import ModelSpec, is_regular, lagrangian_system, mu_names
from app.models import BlockResidual, ResidualReport
from config.settings import settings

logger = logging.getLogger(__name__)

ANTISYMMETRIC_BLOCKS = ("morphism", "hamilton_ii")


# ==================== GRID ====================

@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid; axes[i] = (min, max, count)"""
    axes: Tuple[Tuple[float, float, int], ...]

    def __post_init__(self):
        for i, (lo, hi, count) in enumerate(self.axes):
            if count < 3:
                raise DimensionError(f"Grid axis {i} needs at least 3 nodes, got {count}")
            if not hi > lo:
                raise DimensionError(f"Grid axis {i} needs max > min, got [{lo}, {hi}]")

    @classmethod
    def uniform(cls, *axes: Sequence) -> "Grid":
        return cls(tuple((float(lo), float(hi), int(n)) for lo, hi, n in axes))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(n for _, _, n in self.axes)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for lo, hi, n in self.axes)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def coordinates(self) -> List[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in self.axes]

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*self.coordinates(), indexing="ij")

    def interior_mask(self, include_boundary: bool = False) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        if include_boundary:
            return mask
        for axis in range(self.ndim):
            index = [slice(None)] * self.ndim
            for edge in (0, -1):
                index[axis] = edge
                mask[tuple(index)] = False
        return mask


@dataclass(frozen=True, eq=False)
class FieldConfiguration:
    """u: (nu, *grid); y or mu: (k, r, *grid)"""
    grid: Grid
    u: np.ndarray
    y: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None

    @property
    def side(self) -> str:
        return "lagrangian" if self.y is not None else "hamiltonian"

    def check(self, spec: FibrationSpec) -> None:
        if self.grid.ndim != spec.nx:
            raise DimensionError(f"Grid has {self.grid.ndim} axes, spec has nx = {spec.nx}")
        if (self.y is None) == (self.mu is None):
            raise DimensionError("A field carries exactly one of y or mu")
        if np.shape(self.u) != (spec.nu,) + self.grid.shape:
            raise DimensionError(f"u has shape {np.shape(self.u)}, expected {(spec.nu,) + self.grid.shape}")
        values = self.y if self.y is not None else self.mu
        if np.shape(values) != (spec.k, spec.r) + self.grid.shape:
            raise DimensionError(f"{self.side} values have shape {np.shape(values)}, expected {(spec.k, spec.r) + self.grid.shape}")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(values))):
            raise DimensionError("Field values must be finite")


# ==================== FINITE DIFFERENCES ====================

def fd_derivative(grid: Grid, array: np.ndarray, axis: int) -> np.ndarray:
    """Second-order central differences, one-sided 3-point stencils at the boundary"""
    if not 0 <= axis < grid.ndim:
        raise DimensionError(f"Axis {axis} outside 0..{grid.ndim - 1}")
    array = np.asarray(array, dtype=float)
    lead = array.ndim - grid.ndim
    return np.gradient(array, grid.spacing[axis], axis=lead + axis, edge_order=2)


def fd_gradient(grid: Grid, array: np.ndarray) -> np.ndarray:
    """(..., *grid) -> (..., nx, *grid)"""
    array = np.asarray(array, dtype=float)
    lead = array.ndim - grid.ndim
    if grid.ndim == 0:
        return array[(Ellipsis, None)]
    return np.stack([fd_derivative(grid, array, i) for i in range(grid.ndim)], axis=lead)


def grid_values(arr: np.ndarray, env: Dict[str, Any], grid: Grid) -> np.ndarray:
    """Evaluate an expression array over the grid nodes: arr.shape + grid.shape"""
    return np.broadcast_to(evaluate_array(arr, env), arr.shape + grid.shape).copy()


def node_env(spec: FibrationSpec, field: FieldConfiguration) -> Dict[str, np.ndarray]:
    field.check(spec)
    env = dict(zip(spec.x_names, field.grid.mesh()))
    env.update({name: field.u[A] for A, name in enumerate(spec.u_names)})
    if field.y is not None:
        for alpha in range(spec.k):
            for a in range(spec.r):
                env[y_name(alpha, a)] = field.y[alpha, a]
    else:
        for alpha in range(spec.k):
            for a in range(spec.r):
                env[mu_name(alpha, a)] = field.mu[alpha, a]
    return env


# ==================== PROLONGATION ====================

def second_jet(spec: FibrationSpec, field: FieldConfiguration, env: Optional[Dict[str, np.ndarray]] = None) -> np.ndarray:
    """y2[beta][b][a] = rho^i_a d y^beta_b / dx^i, shape (k, r, r, *grid)"""
    env = node_env(spec, field) if env is None else env
    rho = grid_values(spec.rho_F, env, field.grid)
    dy = fd_gradient(field.grid, field.y)
    return np.einsum("ai...,bci...->bca...", rho, dy)


def prolong_field(spec: FibrationSpec, field: FieldConfiguration) -> Iterator[SecondJetPoint]:
    """Second-jet point at every node, in C order"""
    if field.y is None:
        raise DimensionError("Prolongation needs a Lagrangian field")
    y2 = second_jet(spec, field)
    mesh = field.grid.mesh()
    for node in np.ndindex(*field.grid.shape):
        comp = (slice(None),)
        yield SecondJetPoint(
            x=np.array([m[node] for m in mesh]),
            u=field.u[comp + node],
            y=field.y[comp * 2 + node],
            y2=y2[comp * 3 + node],
        )


# ==================== RESIDUAL REPORTS ====================

def block_stats(name: str, values: np.ndarray, mask: np.ndarray, tol: float, upper: bool = False) -> BlockResidual:
    """Max and RMS of a residual block over the masked nodes; `upper` keeps b < c of an antisymmetric block"""
    values = np.asarray(values, dtype=float)
    if upper:
        r = values.shape[1]
        pairs = [(b, c) for b in range(r) for c in range(b + 1, r)]
        values = np.stack([values[:, b, c] for b, c in pairs], axis=1) if pairs else values[:, :0, 0]
    picked = values[..., mask]
    if picked.size == 0:
        return BlockResidual(name=name, max=0.0, rms=0.0, passed=True)
    worst = float(np.max(np.abs(picked)))
    rms = float(np.sqrt(np.mean(picked ** 2)))
    return BlockResidual(name=name, max=worst, rms=rms, passed=bool(worst < tol))


def derivative_env(spec: FibrationSpec, field: FieldConfiguration) -> Dict[str, np.ndarray]:
    """x, u, y/mu plus the first-derivative symbols ud, mud and (Lagrangian side) yd"""
    env = node_env(spec, field)
    du = fd_gradient(field.grid, field.u)
    for A in range(spec.nu):
        for i in range(spec.nx):
            env[ud_name(A, i)] = du[A, i]
    if field.y is not None:
        y2 = second_jet(spec, field, env)
        for beta in range(spec.k):
            for b in range(spec.r):
                for a in range(spec.r):
                    env[yd_name(beta, b, a)] = y2[beta, b, a]
    else:
        dmu = fd_gradient(field.grid, field.mu)
        for alpha in range(spec.k):
            for a in range(spec.r):
                for i in range(spec.nx):
                    env[mud_name(alpha, a, i)] = dmu[alpha, a, i]
    return env


def residual_values(model: ModelSpec, field: FieldConfiguration) -> Dict[str, np.ndarray]:
    """Per-block residual arrays over the grid (block shape + grid shape)"""
    if field.side == "lagrangian" and model.lagrangian is None:
        raise MissingFunctionError(f"Model '{model.name}' has no Lagrangian for a Lagrangian field")
    if field.side == "hamiltonian" and model.hamiltonian is None:
        raise MissingFunctionError(f"Model '{model.name}' has no Hamiltonian for a Hamiltonian field")
    env = derivative_env(model.spec, field)
    blocks = lagrangian_system(model) if field.side == "lagrangian" else hamilton_symbolic(model)
    return {name: grid_values(block, env, field.grid) for name, block in blocks.items()}


def residual_report(model: ModelSpec, field: FieldConfiguration, tol: Optional[float] = None,
                    include_boundary: Optional[bool] = None,
                    values: Optional[Dict[str, np.ndarray]] = None) -> ResidualReport:
    """Block statistics over the reported nodes; `values` reuses arrays from residual_values"""
    tol = settings.default_tol if tol is None else tol
    include_boundary = settings.include_boundary if include_boundary is None else include_boundary
    values = residual_values(model, field) if values is None else values
    mask = field.grid.interior_mask(include_boundary)
    blocks = [block_stats(name, values[name], mask, tol, upper=name in ANTISYMMETRIC_BLOCKS) for name in values]
    report = ResidualReport(
        side=field.side,
        passed=all(b.passed for b in blocks),
        tol=tol,
        n_nodes=int(np.count_nonzero(mask)),
        include_boundary=include_boundary,
        blocks=blocks,
    )
    logger.info("residual report (%s): %s", field.side, ", ".join(f"{b.name}={b.max:.3e}" for b in blocks))
    return report


# ==================== INTEGRATORS ====================

@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples at t[n]; u: (N, nu); y or mu: (N, k)"""
    t: np.ndarray
    u: np.ndarray
    y: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None

    @property
    def side(self) -> str:
        return "lagrangian" if self.y is not None else "hamiltonian"


def _check_mechanics(model: ModelSpec) -> None:
    spec = model.spec
    if spec.r != 1 or spec.nx > 1:
        raise DimensionError(f"One-dimensional integration needs r = 1 and nx <= 1, got r = {spec.r}, nx = {spec.nx}")


def _time_rate(spec: FibrationSpec):
    return spec.rho_F[0, 0] if spec.nx == 1 else ONE


def _rk4(rhs, t0: float, state: np.ndarray, t_end: float, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    if dt <= 0:
        raise IntegrationError(f"Time step must be positive, got {dt}")
    if t_end <= t0:
        raise IntegrationError(f"Time span must end after it starts, got ({t0}, {t_end})")
    n = max(1, math.ceil((t_end - t0) / dt - 1e-12))
    h = (t_end - t0) / n
    times = t0 + h * np.arange(n + 1)
    states = np.empty((n + 1, state.size))
    states[0] = state
    for step in range(n):
        t, s = times[step], states[step]
        k1 = rhs(t, s)
        k2 = rhs(t + h / 2, s + h / 2 * k1)
        k3 = rhs(t + h / 2, s + h / 2 * k2)
        k4 = rhs(t + h, s + h * k3)
        states[step + 1] = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(states[step + 1])):
            raise IntegrationError(f"Non-finite state at t={times[step + 1]:.6g}")
    return times, states


def integrate_1d(model: ModelSpec, u0: Sequence[float], y0: Sequence[float], t_span: Tuple[float, float],
                 dt: float) -> Trajectory:
    """RK4 on the first-order system obtained by solving the Euler-Lagrange equations for dy/dt"""
    _check_mechanics(model)
    spec = model.spec
    nu, k = spec.nu, spec.k
    zero_jet = {yd_name(beta, 0, 0): ZERO for beta in range(k)}
    forces = [e.substitute(zero_jet) for e in model.el_exprs]
    exprs = forces + list(model.hessian_exprs.flat) + [_time_rate(spec)] + [u_velocity(spec, A, 0) for A in range(nu)]
    fn = compile_exprs(exprs, model.jet_variables)
    timed = spec.nx == 1

    def rhs(t, s):
        out = fn(*(([t] if timed else []) + list(s)))
        F0, H = out[:k], out[k:k + k * k].reshape(k, k)
        rate, u_dot = out[k + k * k], out[k + k * k + 1:]
        if rate == 0:
            raise IntegrationError(f"Time anchor vanishes at t={t:.6g}")
        if k and not is_regular(H):
            raise SingularHessianError(time=t)
        y_dot = -lu_solve(lu_factor(H), F0) if k else np.zeros(0)
        return np.concatenate([u_dot, y_dot]) / rate

    state = np.concatenate([np.asarray(u0, float).ravel(), np.asarray(y0, float).ravel()])
    if state.size != nu + k:
        raise DimensionError(f"Initial state needs {nu} u and {k} y values")
    times, states = _rk4(rhs, float(t_span[0]), state, float(t_span[1]), dt)
    logger.info("integrated %s over [%g, %g] in %d steps", model.name, t_span[0], t_span[1], len(times) - 1)
    return Trajectory(times, states[:, :nu], y=states[:, nu:])


def integrate_1d_hamiltonian(model: ModelSpec, u0: Sequence[float], mu0: Sequence[float],
                             t_span: Tuple[float, float], dt: float) -> Trajectory:
    """RK4 on the explicit Hamilton equations of mechanics (Lie-Poisson form)"""
    _check_mechanics(model)
    spec = model.spec
    nu, k = spec.nu, spec.k
    blocks = hamilton_symbolic(model)
    zero = {ud_name(A, 0): ZERO for A in range(nu)}
    zero.update({mud_name(alpha, 0, 0): ZERO for alpha in range(k)})
    exprs = [e.substitute(zero) for e in blocks["hamilton_i"][:, 0]] + [e.substitute(zero) for e in blocks["hamilton_iii"]]
    exprs.append(_time_rate(spec))
    fn = compile_exprs(exprs, spec.x_names + spec.u_names + mu_names(spec))
    timed = spec.nx == 1

    def rhs(t, s):
        out = fn(*(([t] if timed else []) + list(s)))
        rate = out[-1]
        if rate == 0:
            raise IntegrationError(f"Time anchor vanishes at t={t:.6g}")
        return -out[:-1] / rate

    state = np.concatenate([np.asarray(u0, float).ravel(), np.asarray(mu0, float).ravel()])
    if state.size != nu + k:
        raise DimensionError(f"Initial state needs {nu} u and {k} mu values")
    times, states = _rk4(rhs, float(t_span[0]), state, float(t_span[1]), dt)
    return Trajectory(times, states[:, :nu], mu=states[:, nu:])


def trajectory_field(spec: FibrationSpec, trajectory: Trajectory) -> FieldConfiguration:
    """A trajectory as a field on the one-dimensional time grid"""
    if spec.nx != 1:
        raise DimensionError("Trajectory fields need nx = 1")
    t = trajectory.t
    grid = Grid.uniform((t[0], t[-1], len(t)))
    u = trajectory.u.T.reshape(spec.nu, len(t))
    if trajectory.side == "lagrangian":
        return FieldConfiguration(grid, u, y=trajectory.y.T.reshape(spec.k, 1, len(t)))
    return FieldConfiguration(grid, u, mu=trajectory.mu.T.reshape(spec.k, 1, len(t)))


def trajectory_energy(model: ModelSpec, trajectory: Trajectory) -> np.ndarray:
    """E_L along a Lagrangian trajectory, or H along a Hamiltonian one"""
    if trajectory.side == "lagrangian":
        fn, values = model.energy_fn, trajectory.y
    else:
        fn, values = compile_exprs([model.H], model.spec.x_names + model.spec.u_names + mu_names(model.spec)), trajectory.mu
    return _along(model.spec, fn, trajectory, values)


def trajectory_current(model: ModelSpec, trajectory: Trajectory, current) -> np.ndarray:
    """A scalar expression in (x, u, y), or (x, u, mu) on a Hamiltonian trajectory, along the samples"""
    if trajectory.side == "lagrangian":
        return _along(model.spec, compile_exprs([current], model.jet_variables), trajectory, trajectory.y)
    variables = model.spec.x_names + model.spec.u_names + mu_names(model.spec)
    return _along(model.spec, compile_exprs([current], variables), trajectory, trajectory.mu)


def _along(spec: FibrationSpec, fn, trajectory: Trajectory, values: np.ndarray) -> np.ndarray:
    timed = spec.nx == 1
    out = np.empty(len(trajectory.t))
    for n, t in enumerate(trajectory.t):
        out[n] = fn(*(([t] if timed else []) + list(trajectory.u[n]) + list(values[n])))[0]
    return out
