"""
Pydantic models for spec files, field files and reports
"""
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Field, model_validator

# ==================== FILE FORMATS ====================

class Dims(BaseModel):
    nx: int = Field(ge=0)
    nu: int = Field(ge=0)
    r: int = Field(ge=0)
    k: int = Field(ge=0)


class CurrentSpec(BaseModel):
    """A vertical section whose Noether current simulate reports"""
    name: str
    section: List[str]


class Tolerances(BaseModel):
    validate_tol: Optional[float] = Field(default=None, alias="validate")
    holonomy: Optional[float] = None

    model_config = {"populate_by_name": True}


ARRAY_KEYS = ("rho_F", "rho_Ea", "rho_Ealpha", "C_bas", "C_mix0", "C_mix1", "C_vert")


def _shape_error(data: Any, shape: Tuple[int, ...], where: str) -> Optional[str]:
    if not shape:
        if isinstance(data, list):
            return f"{where}: expected an expression string, got a list"
        if not isinstance(data, (str, int, float)):
            return f"{where}: expected an expression string"
        return None
    if not isinstance(data, list) or len(data) != shape[0]:
        got = len(data) if isinstance(data, list) else type(data).__name__
        return f"{where}: expected a list of length {shape[0]}, got {got}"
    for j, child in enumerate(data):
        error = _shape_error(child, shape[1:], f"{where}[{j}]")
        if error:
            return error
    return None


class SpecFile(BaseModel):
    """One JSON document carrying the algebroid fibration and the model"""
    name: str = "model"
    description: str = ""
    dims: Dims
    rho_F: Optional[List[Any]] = None
    rho_Ea: Optional[List[Any]] = None
    rho_Ealpha: Optional[List[Any]] = None
    C_bas: Optional[List[Any]] = None
    C_mix0: Optional[List[Any]] = None
    C_mix1: Optional[List[Any]] = None
    C_vert: Optional[List[Any]] = None
    lagrangian: Optional[str] = None
    hamiltonian: Optional[str] = None
    sample_box: Optional[Union[Tuple[float, float], List[Tuple[float, float]]]] = None
    tolerances: Tolerances = Field(default_factory=Tolerances)
    currents: List[CurrentSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_shapes(self):
        d = self.dims
        shapes = {
            "rho_F": (d.r, d.nx),
            "rho_Ea": (d.r, d.nu),
            "rho_Ealpha": (d.k, d.nu),
            "C_bas": (d.r, d.r, d.r),
            "C_mix0": (d.r, d.r, d.k),
            "C_mix1": (d.r, d.k, d.k),
            "C_vert": (d.k, d.k, d.k),
        }
        for key, shape in shapes.items():
            value = getattr(self, key)
            if value is not None:
                error = _shape_error(value, shape, key)
                if error:
                    raise ValueError(error)
        for j, current in enumerate(self.currents):
            if len(current.section) != d.k:
                raise ValueError(f"currents[{j}].section: expected {d.k} entries, got {len(current.section)}")
        return self

    def arrays(self) -> Dict[str, List[Any]]:
        return {key: getattr(self, key) for key in ARRAY_KEYS if getattr(self, key) is not None}


class GridAxis(BaseModel):
    min: float
    max: float
    count: int = Field(ge=3)

    @model_validator(mode="after")
    def check_extent(self):
        if not self.max > self.min:
            raise ValueError(f"grid axis needs max > min, got [{self.min}, {self.max}]")
        return self


class FieldFile(BaseModel):
    """Discretized section: JSON header plus row-major flattened arrays"""
    dims: Dims
    grid: List[GridAxis]
    side: str = "lagrangian"
    u: List[float] = Field(default_factory=list)
    y: Optional[List[float]] = None
    mu: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_side(self):
        if self.side not in ("lagrangian", "hamiltonian"):
            raise ValueError(f"side must be 'lagrangian' or 'hamiltonian', got {self.side!r}")
        if self.side == "lagrangian" and self.y is None:
            raise ValueError("lagrangian field file needs 'y'")
        if self.side == "hamiltonian" and self.mu is None:
            raise ValueError("hamiltonian field file needs 'mu'")
        return self


# ==================== REPORTS ====================

class ValidationReport(BaseModel):
    name: str = ""
    passed: bool
    tol: float
    n_points: int
    max_anchor_residual: float
    max_jacobi_residual: float
    max_antisymmetry_residual: float
    worst_jacobi_index: Optional[List[int]] = None


class BlockResidual(BaseModel):
    name: str
    max: float
    rms: float
    passed: bool


class ResidualReport(BaseModel):
    side: str
    passed: bool
    tol: float
    n_nodes: int
    include_boundary: bool
    blocks: List[BlockResidual]

    def block(self, name: str) -> BlockResidual:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)


class EquivalenceReport(BaseModel):
    passed: bool
    tol: float
    n_nodes: int
    max_residual: float
    blocks: List[BlockResidual]
    max_legendre_roundtrip: float
