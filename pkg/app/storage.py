"""
Persistence: spec files, field files and CSV dumps of residuals and trajectories
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.algebroid import FibrationSpec, SectionExpr
from app.errors import DimensionError, EngineError, ExpressionError, SpecFileError
from app.expr import ScalarExpr, array_to_lists, as_expr, mu_name, to_text, y_name
from app.fields import ANTISYMMETRIC_BLOCKS, FieldConfiguration, Grid, Trajectory, node_env
from app.jet import upper_pairs
from app.lagrangian import ModelSpec
from app.models import CurrentSpec, Dims, FieldFile, GridAxis, SpecFile, Tolerances

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


# ==================== JSON ====================

def _read_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise SpecFileError(f"Malformed JSON: {e.msg}", location=f"{path}:{e.lineno}:{e.colno}")
    except OSError as e:
        raise SpecFileError(f"Cannot read file: {e.strerror}", location=str(path))


def _write_json(path: PathLike, payload: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _pydantic_location(error: ValidationError) -> Tuple[str, str]:
    first = error.errors()[0]
    loc = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in first.get("loc", ())).lstrip(".")
    return first.get("msg", str(error)), loc


# ==================== SPEC FILES ====================

def load_spec_file(path: PathLike) -> SpecFile:
    data = _read_json(path)
    try:
        return SpecFile.model_validate(data)
    except ValidationError as e:
        message, loc = _pydantic_location(e)
        raise SpecFileError(message, location=f"{path}: {loc}" if loc else str(path))


def _parse_nested(data: Any, where: str, allowed: Sequence[str]):
    """Nested lists of expression text -> nested lists of expressions, with a location on failure"""
    if isinstance(data, list):
        return [_parse_nested(child, f"{where}[{j}]", allowed) for j, child in enumerate(data)]
    try:
        e = as_expr(data)
    except ExpressionError as err:
        raise SpecFileError(err.detail, location=where)
    extra = e.variables - set(allowed)
    if extra:
        raise SpecFileError(f"undeclared variables {', '.join(sorted(extra))}", location=where)
    return e


def _parse_function(text: Optional[str], where: str) -> Optional[ScalarExpr]:
    if text is None:
        return None
    try:
        return as_expr(text)
    except ExpressionError as err:
        raise SpecFileError(err.detail, location=where)


def fibration_from_file(sf: SpecFile) -> FibrationSpec:
    d = sf.dims
    allowed = [f"x{i + 1}" for i in range(d.nx)] + [f"u{A + 1}" for A in range(d.nu)]
    arrays = {key: _parse_nested(value, key, allowed) for key, value in sf.arrays().items()}
    try:
        return FibrationSpec.build(d.nx, d.nu, d.r, d.k, name=sf.name, **arrays)
    except SpecFileError:
        raise
    except EngineError as e:
        raise SpecFileError(e.detail)


def model_from_file(sf: SpecFile) -> ModelSpec:
    """Fibration plus Lagrangian/Hamiltonian; a file with neither raises MissingFunctionError"""
    spec = fibration_from_file(sf)
    currents = []
    for j, current in enumerate(sf.currents):
        vertical = _parse_nested(current.section, f"currents[{j}].section", spec.coords)
        currents.append((current.name, SectionExpr.of(spec, vertical=vertical)))
    try:
        return ModelSpec(
            spec,
            lagrangian=_parse_function(sf.lagrangian, "lagrangian"),
            hamiltonian=_parse_function(sf.hamiltonian, "hamiltonian"),
            name=sf.name,
            description=sf.description,
            sample_box=sf.sample_box,
            currents=tuple(currents),
        )
    except SpecFileError:
        raise
    except (ExpressionError, DimensionError) as e:
        raise SpecFileError(e.detail)


def load_fibration(path: PathLike) -> FibrationSpec:
    return fibration_from_file(load_spec_file(path))


def load_model(path: PathLike) -> ModelSpec:
    model = model_from_file(load_spec_file(path))
    logger.info("loaded model %s from %s", model.name, path)
    return model


def model_to_spec_file(model: ModelSpec, tolerances: Optional[Tolerances] = None) -> SpecFile:
    spec = model.spec
    data: Dict[str, Any] = {
        "name": model.name or spec.name,
        "description": model.description,
        "dims": Dims(nx=spec.nx, nu=spec.nu, r=spec.r, k=spec.k),
        "lagrangian": to_text(model.lagrangian) if model.lagrangian is not None else None,
        "hamiltonian": to_text(model.hamiltonian) if model.hamiltonian is not None else None,
        "sample_box": model.sample_box,
        "tolerances": tolerances or Tolerances(),
        "currents": [CurrentSpec(name=name, section=[to_text(c) for c in sigma.vertical_part])
                     for name, sigma in model.currents],
    }
    for key, value in spec.arrays().items():
        if value.size:
            data[key] = array_to_lists(value)
    return SpecFile(**data)


def save_spec_file(sf: SpecFile, path: PathLike) -> None:
    _write_json(path, sf.model_dump(mode="json", by_alias=True, exclude_none=True))
    logger.info("wrote spec file %s", path)


def export_model(model: ModelSpec, path: PathLike) -> None:
    save_spec_file(model_to_spec_file(model), path)


# ==================== FIELD FILES ====================

def _reshape(values: List[float], shape: Tuple[int, ...], where: str) -> np.ndarray:
    flat = np.asarray(values, dtype=float)
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise SpecFileError(f"expected {expected} values for shape {shape}, got {flat.size}", location=where)
    return flat.reshape(shape)


def field_from_file(ff: FieldFile, spec: FibrationSpec) -> FieldConfiguration:
    """Row-major flattened arrays -> FieldConfiguration; dims must match the fibration"""
    d = ff.dims
    if (d.nx, d.nu, d.r, d.k) != (spec.nx, spec.nu, spec.r, spec.k):
        raise SpecFileError(
            f"field dims (nx={d.nx}, nu={d.nu}, r={d.r}, k={d.k}) do not match the fibration "
            f"(nx={spec.nx}, nu={spec.nu}, r={spec.r}, k={spec.k})", location="dims")
    if len(ff.grid) != spec.nx:
        raise SpecFileError(f"grid has {len(ff.grid)} axes, spec has nx = {spec.nx}", location="grid")
    grid = Grid.uniform(*((axis.min, axis.max, axis.count) for axis in ff.grid))
    u = _reshape(ff.u, (spec.nu,) + grid.shape, "u")
    side_values = ff.y if ff.side == "lagrangian" else ff.mu
    values = _reshape(side_values, (spec.k, spec.r) + grid.shape, "y" if ff.side == "lagrangian" else "mu")
    if ff.side == "lagrangian":
        field = FieldConfiguration(grid, u, y=values)
    else:
        field = FieldConfiguration(grid, u, mu=values)
    field.check(spec)
    return field


def load_field(path: PathLike, spec: FibrationSpec) -> FieldConfiguration:
    data = _read_json(path)
    try:
        ff = FieldFile.model_validate(data)
    except ValidationError as e:
        message, loc = _pydantic_location(e)
        raise SpecFileError(message, location=f"{path}: {loc}" if loc else str(path))
    return field_from_file(ff, spec)


def field_to_file(field: FieldConfiguration, spec: FibrationSpec) -> FieldFile:
    values = field.y if field.y is not None else field.mu
    payload = {
        "dims": Dims(nx=spec.nx, nu=spec.nu, r=spec.r, k=spec.k),
        "grid": [GridAxis(min=lo, max=hi, count=n) for lo, hi, n in field.grid.axes],
        "side": field.side,
        "u": np.asarray(field.u, dtype=float).ravel().tolist(),
        "y" if field.side == "lagrangian" else "mu": np.asarray(values, dtype=float).ravel().tolist(),
    }
    return FieldFile(**payload)


def save_field(field: FieldConfiguration, spec: FibrationSpec, path: PathLike) -> None:
    _write_json(path, field_to_file(field, spec).model_dump(mode="json", exclude_none=True))


# ==================== CSV ====================

def residual_columns(spec: FibrationSpec, field: FieldConfiguration, values: Dict[str, np.ndarray],
                     include_boundary: bool = False) -> Dict[str, np.ndarray]:
    """x1.., u1.., y{alpha}_{a} (or mu..) and one column per residual entry, one row per reported node

    Entries are labelled like the derived equations, e.g. morphism[0][0][1]; antisymmetric blocks keep b < c.
    """
    mask = field.grid.interior_mask(include_boundary)
    env = node_env(spec, field)
    names = list(spec.x_names) + list(spec.u_names)
    names += [(y_name if field.side == "lagrangian" else mu_name)(alpha, a)
              for alpha in range(spec.k) for a in range(spec.r)]
    columns = {name: np.asarray(env[name], dtype=float)[mask] for name in names}
    for name, block in values.items():
        shape = block.shape[:block.ndim - field.grid.ndim]
        if name in ANTISYMMETRIC_BLOCKS:
            indices = [(g, b, c) for g in range(shape[0]) for b, c in upper_pairs(shape[1])]
        else:
            indices = list(np.ndindex(*shape))
        for idx in indices:
            columns[name + "".join(f"[{j}]" for j in idx)] = np.asarray(block[idx], dtype=float)[mask]
    return columns


def trajectory_columns(spec: FibrationSpec, trajectory: Trajectory) -> Dict[str, np.ndarray]:
    """t, u1.., y1.. (or mu1..) columns of a trajectory"""
    columns = {"t": trajectory.t}
    for A in range(spec.nu):
        columns[f"u{A + 1}"] = trajectory.u[:, A]
    head, values = ("y", trajectory.y) if trajectory.side == "lagrangian" else ("mu", trajectory.mu)
    for alpha in range(spec.k):
        columns[f"{head}{alpha + 1}"] = values[:, alpha]
    return columns


def _write_rows(stream: TextIO, columns: Dict[str, Iterable[float]]) -> None:
    names = list(columns)
    writer = csv.writer(stream)
    writer.writerow(names)
    for row in zip(*(np.asarray(list(columns[name]), dtype=float) for name in names)):
        writer.writerow([f"{v:.17g}" for v in row])


def write_columns_csv(columns: Dict[str, Iterable[float]], target: Union[PathLike, TextIO]) -> None:
    """Named equal-length columns as CSV to a path or an open text stream"""
    if hasattr(target, "write"):
        _write_rows(target, columns)
        return
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        _write_rows(f, columns)
