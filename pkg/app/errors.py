"""
Exception hierarchy for the engine
Every error carries a human readable detail and the process exit code the CLI maps it to
"""
from typing import Iterable, Optional


class EngineError(Exception):
    """Base error: detail message plus exit code"""
    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


# ==================== EXPRESSIONS ====================

class ExpressionError(EngineError):
    exit_code = 2


class ExprSyntaxError(ExpressionError):
    """Malformed expression text"""

    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = sorted(set(expected))
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class UnknownFunctionError(ExpressionError):
    def __init__(self, name: str, offset: int = 0):
        self.name = name
        self.offset = offset
        super().__init__(f"Unknown function '{name}' at offset {offset}")


class EvaluationError(EngineError):
    exit_code = 1


class UnboundVariableError(EvaluationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unbound variable '{name}'")


class DomainError(EvaluationError):
    pass


# ==================== GEOMETRY ====================

class DimensionError(EngineError):
    exit_code = 2


class DegreeError(EngineError):
    exit_code = 2


class NonVerticalSectionError(EngineError):
    exit_code = 2

    def __init__(self, detail: str = "Section is not vertical: its e_a coefficients must vanish"):
        super().__init__(detail)


# ==================== NUMERICS ====================

class SingularHessianError(EngineError):
    """Hessian of L with respect to the jet variables is not invertible"""

    def __init__(self, detail: str = "Singular Hessian", time: Optional[float] = None):
        self.time = time
        if time is not None:
            detail = f"{detail} at t={time:.6g}"
        super().__init__(detail)


class ConvergenceError(EngineError):
    def __init__(self, detail: str, residual: float):
        self.residual = residual
        super().__init__(f"{detail} (last residual {residual:.3e})")


class IntegrationError(EngineError):
    pass


# ==================== MODELS & FILES ====================

class MissingFunctionError(EngineError):
    """Requested side needs a Lagrangian or Hamiltonian the model does not carry"""
    exit_code = 1


class SpecFileError(EngineError):
    exit_code = 2

    def __init__(self, detail: str, location: Optional[str] = None):
        self.location = location
        if location:
            detail = f"{location}: {detail}"
        super().__init__(detail)


class PresetError(EngineError):
    exit_code = 2
