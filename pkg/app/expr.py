"""
Symbolic scalar expressions: parser, printers, evaluator and exact differentiation
Every structure function, Lagrangian and Hamiltonian in the engine is one of these trees
"""
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import DimensionError, DomainError, ExprSyntaxError, UnboundVariableError, UnknownFunctionError

Number = Union[Fraction, float]
Value = Union[float, np.ndarray]
Env = Mapping[str, Value]

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")
MAX_EXACT_POWER = 64


# ==================== NODES ====================

class ScalarExpr:
    """Base class of all expression nodes (immutable, structurally comparable)"""

    def evaluate(self, env: Env) -> Value:
        raise NotImplementedError

    def diff(self, var: str) -> "ScalarExpr":
        if var not in self.variables:
            return ZERO
        return self._diff(var)

    def _diff(self, var: str) -> "ScalarExpr":
        raise NotImplementedError

    def substitute(self, mapping: Mapping[str, "ScalarExpr"]) -> "ScalarExpr":
        raise NotImplementedError

    def rebuild(self) -> "ScalarExpr":
        raise NotImplementedError

    @cached_property
    def variables(self) -> FrozenSet[str]:
        return frozenset()

    def free_variables(self) -> FrozenSet[str]:
        return self.variables

    def __add__(self, other): return add(self, as_expr(other))
    def __radd__(self, other): return add(as_expr(other), self)
    def __sub__(self, other): return sub(self, as_expr(other))
    def __rsub__(self, other): return sub(as_expr(other), self)
    def __mul__(self, other): return mul(self, as_expr(other))
    def __rmul__(self, other): return mul(as_expr(other), self)
    def __truediv__(self, other): return div(self, as_expr(other))
    def __rtruediv__(self, other): return div(as_expr(other), self)
    def __pow__(self, other): return power(self, as_expr(other))
    def __neg__(self): return neg(self)

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(ScalarExpr):
    value: Number

    def evaluate(self, env: Env) -> Value:
        return float(self.value)

    def _diff(self, var: str) -> ScalarExpr:
        return ZERO

    def substitute(self, mapping):
        return self

    def rebuild(self):
        return self


@dataclass(frozen=True, eq=True)
class Var(ScalarExpr):
    name: str

    def evaluate(self, env: Env) -> Value:
        try:
            return env[self.name]
        except KeyError:
            raise UnboundVariableError(self.name)

    def _diff(self, var: str) -> ScalarExpr:
        return ONE

    def substitute(self, mapping):
        return mapping.get(self.name, self)

    def rebuild(self):
        return self

    @cached_property
    def variables(self) -> FrozenSet[str]:
        return frozenset((self.name,))


@dataclass(frozen=True, eq=True)
class _Binary(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr

    @cached_property
    def variables(self) -> FrozenSet[str]:
        return self.left.variables | self.right.variables

    def substitute(self, mapping):
        return self._make(self.left.substitute(mapping), self.right.substitute(mapping))

    def rebuild(self):
        return self._make(self.left.rebuild(), self.right.rebuild())

    @staticmethod
    def _make(a, b):
        raise NotImplementedError


@dataclass(frozen=True, eq=True)
class Add(_Binary):
    def evaluate(self, env):
        return self.left.evaluate(env) + self.right.evaluate(env)

    def _diff(self, var):
        return add(self.left.diff(var), self.right.diff(var))

    @staticmethod
    def _make(a, b):
        return add(a, b)


@dataclass(frozen=True, eq=True)
class Sub(_Binary):
    def evaluate(self, env):
        return self.left.evaluate(env) - self.right.evaluate(env)

    def _diff(self, var):
        return sub(self.left.diff(var), self.right.diff(var))

    @staticmethod
    def _make(a, b):
        return sub(a, b)


@dataclass(frozen=True, eq=True)
class Mul(_Binary):
    def evaluate(self, env):
        return self.left.evaluate(env) * self.right.evaluate(env)

    def _diff(self, var):
        return add(mul(self.left.diff(var), self.right), mul(self.left, self.right.diff(var)))

    @staticmethod
    def _make(a, b):
        return mul(a, b)


@dataclass(frozen=True, eq=True)
class Div(_Binary):
    def evaluate(self, env):
        num = self.left.evaluate(env)
        den = self.right.evaluate(env)
        if np.any(np.asarray(den) == 0):
            raise DomainError(f"Division by zero in {to_text(self)}")
        return num / den

    def _diff(self, var):
        top = sub(mul(self.left.diff(var), self.right), mul(self.left, self.right.diff(var)))
        return div(top, power(self.right, TWO))

    @staticmethod
    def _make(a, b):
        return div(a, b)


@dataclass(frozen=True, eq=True)
class Pow(_Binary):
    def evaluate(self, env):
        base = np.asarray(self.left.evaluate(env), dtype=float)
        expo = np.asarray(self.right.evaluate(env), dtype=float)
        if np.any((base < 0) & (expo != np.round(expo))):
            raise DomainError(f"Negative base with non-integer exponent in {to_text(self)}")
        if np.any((base == 0) & (expo < 0)):
            raise DomainError(f"Zero raised to a negative power in {to_text(self)}")
        return _scalar(np.power(base, expo))

    def _diff(self, var):
        base, expo = self.left, self.right
        if var not in expo.variables:
            return mul(mul(expo, power(base, sub(expo, ONE))), base.diff(var))
        if var not in base.variables:
            return mul(mul(self, call("ln", base)), expo.diff(var))
        inner = add(mul(expo.diff(var), call("ln", base)), div(mul(expo, base.diff(var)), base))
        return mul(self, inner)

    @staticmethod
    def _make(a, b):
        return power(a, b)


@dataclass(frozen=True, eq=True)
class Neg(ScalarExpr):
    child: ScalarExpr

    def evaluate(self, env):
        return -self.child.evaluate(env)

    def _diff(self, var):
        return neg(self.child.diff(var))

    def substitute(self, mapping):
        return neg(self.child.substitute(mapping))

    def rebuild(self):
        return neg(self.child.rebuild())

    @cached_property
    def variables(self) -> FrozenSet[str]:
        return self.child.variables


@dataclass(frozen=True, eq=True)
class Call(ScalarExpr):
    func: str
    arg: ScalarExpr

    def evaluate(self, env):
        x = self.arg.evaluate(env)
        if self.func == "ln" and np.any(np.asarray(x) <= 0):
            raise DomainError(f"ln of a non-positive argument in {to_text(self)}")
        if self.func == "sqrt" and np.any(np.asarray(x) < 0):
            raise DomainError(f"sqrt of a negative argument in {to_text(self)}")
        return _scalar(_NUMPY_FUNCS[self.func](x))

    def _diff(self, var):
        a = self.arg
        if self.func == "sin":
            outer = call("cos", a)
        elif self.func == "cos":
            outer = neg(call("sin", a))
        elif self.func == "exp":
            outer = self
        elif self.func == "ln":
            return div(a.diff(var), a)
        else:
            return div(a.diff(var), mul(TWO, self))
        return mul(outer, a.diff(var))

    def substitute(self, mapping):
        return call(self.func, self.arg.substitute(mapping))

    def rebuild(self):
        return call(self.func, self.arg.rebuild())

    @cached_property
    def variables(self) -> FrozenSet[str]:
        return self.arg.variables


_NUMPY_FUNCS: Dict[str, Callable] = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "ln": np.log, "sqrt": np.sqrt,
}

ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))
TWO = Const(Fraction(2))
HALF = Const(Fraction(1, 2))
PI = Const(math.pi)


def _scalar(value):
    if np.ndim(value) == 0:
        return float(value)
    return value


# ==================== SMART CONSTRUCTORS ====================

def number(value: Union[int, float, Fraction]) -> Const:
    """Constant node; ints become exact rationals"""
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        return Const(Fraction(value))
    if isinstance(value, Fraction):
        return Const(value)
    return Const(float(value))


def as_expr(value) -> ScalarExpr:
    if isinstance(value, ScalarExpr):
        return value
    if isinstance(value, str):
        return simplify(parse(value))
    return number(value)


def _const(e: ScalarExpr) -> Optional[Number]:
    return e.value if isinstance(e, Const) else None


def _is(e: ScalarExpr, v) -> bool:
    return isinstance(e, Const) and e.value == v


def _folded(value) -> Optional[Const]:
    if isinstance(value, Fraction):
        return Const(value)
    if isinstance(value, int):
        return Const(Fraction(value))
    if isinstance(value, float) and math.isfinite(value):
        return Const(value)
    return None


def add(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        folded = _folded(ca + cb)
        if folded is not None:
            return folded
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(b, Neg):
        return sub(a, b.child)
    if cb is not None and cb < 0:
        return sub(a, Const(-cb))
    return Add(a, b)


def sub(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        folded = _folded(ca - cb)
        if folded is not None:
            return folded
    if a == b:
        return ZERO
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if isinstance(b, Neg):
        return add(a, b.child)
    if cb is not None and cb < 0:
        return add(a, Const(-cb))
    return Sub(a, b)


def mul(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        folded = _folded(ca * cb)
        if folded is not None:
            return folded
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return neg(b)
    if _is(b, -1):
        return neg(a)
    return Mul(a, b)


def div(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None and cb != 0:
        folded = _folded(ca / cb)
        if folded is not None:
            return folded
    if _is(a, 0) and not _is(b, 0):
        return ZERO
    if _is(b, 1):
        return a
    if _is(b, -1):
        return neg(a)
    return Div(a, b)


def neg(a: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.child
    return Neg(a)


def power(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        folded = _fold_power(ca, cb)
        if folded is not None:
            return folded
    if _is(b, 1):
        return a
    if _is(b, 0):
        return ONE
    if _is(a, 1):
        return ONE
    return Pow(a, b)


def _fold_power(base: Number, expo: Number) -> Optional[Const]:
    if base == 0 and expo < 0:
        return None
    exact = isinstance(base, Fraction) and isinstance(expo, Fraction)
    if exact and expo.denominator == 1 and abs(expo.numerator) <= MAX_EXACT_POWER:
        return Const(base ** expo.numerator)
    if base < 0 and float(expo) != round(float(expo)):
        return None
    try:
        return _folded(float(base) ** float(expo))
    except (OverflowError, ZeroDivisionError):
        return None


def call(func: str, arg: ScalarExpr) -> ScalarExpr:
    if func not in FUNCTIONS:
        raise UnknownFunctionError(func)
    value = _const(arg)
    if value is not None:
        folded = _fold_call(func, value)
        if folded is not None:
            return folded
    return Call(func, arg)


def _fold_call(func: str, value: Number) -> Optional[Const]:
    if isinstance(value, Fraction):
        if value == 0 and func in ("sin", "sqrt"):
            return ZERO
        if value == 0 and func in ("cos", "exp"):
            return ONE
        if value == 1 and func == "ln":
            return ZERO
        if func == "sqrt" and value > 0:
            num, den = math.isqrt(value.numerator), math.isqrt(value.denominator)
            if num * num == value.numerator and den * den == value.denominator:
                return Const(Fraction(num, den))
        return None
    if func == "ln" and value <= 0:
        return None
    if func == "sqrt" and value < 0:
        return None
    try:
        return _folded(float(_NUMPY_FUNCS[func](value)))
    except OverflowError:
        return None


def simplify(e: ScalarExpr) -> ScalarExpr:
    """Constant folding and neutral-element removal; idempotent, never expands products"""
    return e.rebuild()


def diff(e: ScalarExpr, var: str) -> ScalarExpr:
    return e.diff(var)


def evaluate(e: ScalarExpr, env: Env) -> Value:
    """Evaluate with numpy semantics; scalars come back as float"""
    with np.errstate(over="ignore", invalid="ignore"):
        return _scalar(e.evaluate(env))


def substitute(e: ScalarExpr, mapping: Mapping[str, ScalarExpr]) -> ScalarExpr:
    return e.substitute(mapping)


def total(terms: Sequence[ScalarExpr]) -> ScalarExpr:
    result: ScalarExpr = ZERO
    for term in terms:
        result = add(result, term)
    return result


# ==================== PARSER ====================

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[a-zA-Z][a-zA-Z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
)
_ATOM_START = ("NUMBER", "IDENT", "(", "-")


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise ExprSyntaxError(f"Unexpected character {text[pos]!r}", _byte_offset(text, pos), _ATOM_START)
        kind = match.lastgroup
        if kind != "ws":
            value = match.group()
            tokens.append((value if kind == "op" else kind.upper(), value, _byte_offset(text, pos)))
        pos = match.end()
    tokens.append(("EOF", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _parse_number(literal: str) -> Const:
    has_exponent = "e" in literal or "E" in literal
    fraction_digits = len(literal.split(".", 1)[1]) if "." in literal and not has_exponent else 0
    if not has_exponent and fraction_digits <= 9:
        return Const(Fraction(literal.rstrip(".") or "0"))
    return Const(float(literal))


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.index = 0

    @property
    def current(self) -> Tuple[str, str, int]:
        return self.tokens[self.index]

    def _advance(self) -> Tuple[str, str, int]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _fail(self, expected) -> None:
        kind, value, offset = self.current
        found = "end of input" if kind == "EOF" else repr(value)
        raise ExprSyntaxError(f"Unexpected {found}", offset, expected)

    def parse(self) -> ScalarExpr:
        node = self.expr()
        if self.current[0] != "EOF":
            self._fail(("+", "-", "*", "/", "^", "EOF"))
        return node

    def expr(self) -> ScalarExpr:
        node = self.term()
        while self.current[0] in ("+", "-"):
            op = self._advance()[0]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> ScalarExpr:
        node = self.unary()
        while self.current[0] in ("*", "/"):
            op = self._advance()[0]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self) -> ScalarExpr:
        if self.current[0] == "-":
            self._advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> ScalarExpr:
        base = self.atom()
        if self.current[0] == "^":
            self._advance()
            return Pow(base, self.unary())
        return base

    def atom(self) -> ScalarExpr:
        kind, value, offset = self.current
        if kind == "NUMBER":
            self._advance()
            return _parse_number(value)
        if kind == "IDENT":
            self._advance()
            if self.current[0] == "(":
                if value not in FUNCTIONS:
                    raise UnknownFunctionError(value, offset)
                self._advance()
                arg = self.expr()
                self._expect(")")
                return Call(value, arg)
            if value in FUNCTIONS:
                self._fail(("(",))
            if value == "pi":
                return PI
            return Var(value)
        if kind == "(":
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        self._fail(_ATOM_START)

    def _expect(self, kind: str) -> None:
        if self.current[0] != kind:
            self._fail((kind,))
        self._advance()


def parse(text: str) -> ScalarExpr:
    """Parse expression text into a raw (unsimplified) tree"""
    return _Parser(text).parse()


def parse_simplified(text: str) -> ScalarExpr:
    return simplify(parse(text))


# ==================== PRINTERS ====================

PREC_ADD, PREC_MUL, PREC_NEG, PREC_POW, PREC_ATOM = 1, 2, 3, 4, 5


def _const_text(value: Number) -> Tuple[str, int]:
    if isinstance(value, float):
        if value == math.pi:
            return "pi", PREC_ATOM
        text = repr(value)
        if "e" not in text and "E" not in text:
            digits = len(text.split(".", 1)[1]) if "." in text else 0
            if digits <= 9:
                text += "e0"
        return (f"({text})", PREC_ATOM) if value < 0 else (text, PREC_ATOM)
    if value.denominator == 1 and value >= 0:
        return str(value.numerator), PREC_ATOM
    return f"({value})", PREC_ATOM


def _text(e: ScalarExpr) -> Tuple[str, int]:
    if isinstance(e, Const):
        return _const_text(e.value)
    if isinstance(e, Var):
        return e.name, PREC_ATOM
    if isinstance(e, Call):
        return f"{e.func}({_text(e.arg)[0]})", PREC_ATOM
    if isinstance(e, Neg):
        return "-" + _wrap(e.child, PREC_NEG), PREC_NEG
    if isinstance(e, Pow):
        return f"{_wrap(e.left, PREC_ATOM)}^{_wrap(e.right, PREC_NEG)}", PREC_POW
    if isinstance(e, (Mul, Div)):
        op = "*" if isinstance(e, Mul) else "/"
        return f"{_wrap(e.left, PREC_MUL)}{op}{_wrap(e.right, PREC_NEG)}", PREC_MUL
    op = " + " if isinstance(e, Add) else " - "
    return f"{_wrap(e.left, PREC_ADD)}{op}{_wrap(e.right, PREC_MUL)}", PREC_ADD


def _wrap(e: ScalarExpr, minimum: int) -> str:
    text, prec = _text(e)
    return text if prec >= minimum else f"({text})"


def to_text(e: ScalarExpr) -> str:
    """Canonical re-parseable text"""
    return _text(e)[0]


SymbolMapper = Callable[[str], str]

_LATEX_FUNCS = {"sin": r"\sin", "cos": r"\cos", "exp": r"\exp", "ln": r"\ln"}


def _latex_const(value: Number) -> Tuple[str, int]:
    if isinstance(value, float):
        if value == math.pi:
            return r"\pi", PREC_ATOM
        if value < 0:
            return f"-{repr(-value)}", PREC_NEG
        return repr(value), PREC_ATOM
    if value.denominator == 1:
        return str(value.numerator), (PREC_ATOM if value >= 0 else PREC_NEG)
    body = rf"\frac{{{abs(value.numerator)}}}{{{value.denominator}}}"
    return (body, PREC_ATOM) if value > 0 else ("-" + body, PREC_NEG)


def _latex(e: ScalarExpr, symbol: SymbolMapper) -> Tuple[str, int]:
    if isinstance(e, Const):
        return _latex_const(e.value)
    if isinstance(e, Var):
        return symbol(e.name), PREC_ATOM
    if isinstance(e, Call):
        inner = _latex(e.arg, symbol)[0]
        if e.func == "sqrt":
            return rf"\sqrt{{{inner}}}", PREC_ATOM
        return rf"{_LATEX_FUNCS[e.func]}\left({inner}\right)", PREC_ATOM
    if isinstance(e, Neg):
        return "-" + _latex_wrap(e.child, PREC_NEG, symbol), PREC_NEG
    if isinstance(e, Pow):
        base = _latex_wrap(e.left, PREC_ATOM, symbol)
        return f"{base}^{{{_latex(e.right, symbol)[0]}}}", PREC_POW
    if isinstance(e, Div):
        return rf"\frac{{{_latex(e.left, symbol)[0]}}}{{{_latex(e.right, symbol)[0]}}}", PREC_ATOM
    if isinstance(e, Mul):
        return rf"{_latex_wrap(e.left, PREC_MUL, symbol)} \cdot {_latex_wrap(e.right, PREC_NEG, symbol)}", PREC_MUL
    op = " + " if isinstance(e, Add) else " - "
    return f"{_latex_wrap(e.left, PREC_ADD, symbol)}{op}{_latex_wrap(e.right, PREC_MUL, symbol)}", PREC_ADD


def _latex_wrap(e: ScalarExpr, minimum: int, symbol: SymbolMapper) -> str:
    text, prec = _latex(e, symbol)
    return text if prec >= minimum else rf"\left({text}\right)"


def to_latex(e: ScalarExpr, symbol: Optional[SymbolMapper] = None) -> str:
    return _latex(e, symbol or (lambda name: name))[0]


_INDEXED = re.compile(r"^(x|u|y|yd|mu|ud|mud)((?:\d+_?)+)$")


def index_symbol(name: str) -> str:
    """LaTeX rendering of the flat jet/momentum variable names"""
    if name == "mu0":
        return r"\mu_{0}"
    match = _INDEXED.match(name)
    if match is None:
        return name
    head, idx = match.group(1), match.group(2).split("_")
    if head in ("x", "u") and len(idx) == 1:
        return f"{head}^{{{idx[0]}}}"
    if head == "y" and len(idx) == 2:
        return f"y^{{{idx[0]}}}_{{{idx[1]}}}"
    if head == "yd" and len(idx) == 3:
        return f"y^{{{idx[0]}}}_{{{idx[1]}{idx[2]}}}"
    if head == "mu" and len(idx) == 2:
        return rf"\mu^{{{idx[1]}}}_{{{idx[0]}}}"
    if head == "ud" and len(idx) == 2:
        return f"u^{{{idx[0]}}}_{{,{idx[1]}}}"
    if head == "mud" and len(idx) == 3:
        return rf"\mu^{{{idx[1]}}}_{{{idx[0]},{idx[2]}}}"
    return name


def to_string(e: ScalarExpr, fmt: str = "text", symbol: Optional[SymbolMapper] = None) -> str:
    if fmt == "latex":
        return to_latex(e, symbol)
    return to_text(e)


# ==================== COMPILATION ====================

def _py(e: ScalarExpr, names: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        try:
            return names[e.name]
        except KeyError:
            raise UnboundVariableError(e.name)
    if isinstance(e, Call):
        if e.func not in FUNCTIONS:
            raise UnknownFunctionError(e.func)
        func = "log" if e.func == "ln" else e.func
        return f"_np.{func}({_py(e.arg, names)})"
    if isinstance(e, Neg):
        return f"(-{_py(e.child, names)})"
    if isinstance(e, Pow):
        return f"_np.power({_py(e.left, names)}, {_py(e.right, names)})"
    ops = {Add: "+", Sub: "-", Mul: "*", Div: "/"}
    return f"({_py(e.left, names)} {ops[type(e)]} {_py(e.right, names)})"


def compile_exprs(exprs: Sequence[ScalarExpr], variables: Sequence[str]) -> Callable[..., np.ndarray]:
    """Point evaluator f(*values) -> array of len(exprs); no domain checks

    The lambda source is built from the tree: variables become positional _v{j} parameters and
    only numpy calls appear, so no text from the spec file reaches eval.
    """
    names = {name: f"_v{j}" for j, name in enumerate(variables)}
    body = ", ".join(_py(e, names) for e in exprs)
    source = f"lambda {', '.join(names.values())}: _np.array([{body}{',' if len(exprs) == 1 else ''}], dtype=float)"
    return eval(source, {"_np": np})


# ==================== NAMING ====================

def x_name(i: int) -> str:
    return f"x{i + 1}"


def u_name(A: int) -> str:
    return f"u{A + 1}"


def y_name(alpha: int, a: int) -> str:
    return f"y{alpha + 1}_{a + 1}"


def yd_name(alpha: int, a: int, b: int) -> str:
    """Second-jet symbol: derivative of y^alpha_a in direction b (direction last)"""
    return f"yd{alpha + 1}_{a + 1}_{b + 1}"


def mu_name(alpha: int, a: int) -> str:
    return f"mu{alpha + 1}_{a + 1}"


def ud_name(A: int, i: int) -> str:
    return f"ud{A + 1}_{i + 1}"


def mud_name(alpha: int, a: int, i: int) -> str:
    return f"mud{alpha + 1}_{a + 1}_{i + 1}"


MU0 = "mu0"


# ==================== ARRAYS ====================

def zeros(shape: Tuple[int, ...]) -> np.ndarray:
    arr = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        arr[idx] = ZERO
    return arr


def expr_array(data, shape: Tuple[int, ...], where: str = "array") -> np.ndarray:
    """Nested lists of strings/numbers/expressions -> object array of the given shape"""
    arr = np.empty(shape, dtype=object)

    def fill(node, prefix: Tuple[int, ...]):
        depth = len(prefix)
        if depth == len(shape):
            if isinstance(node, (list, tuple, np.ndarray)):
                raise DimensionError(f"{where}{_loc(prefix)}: expected a scalar entry")
            arr[prefix] = as_expr(node)
            return
        if not isinstance(node, (list, tuple, np.ndarray)) or len(node) != shape[depth]:
            got = len(node) if isinstance(node, (list, tuple, np.ndarray)) else "scalar"
            raise DimensionError(f"{where}{_loc(prefix)}: expected length {shape[depth]}, got {got}")
        for j, child in enumerate(node):
            fill(child, prefix + (j,))

    fill(data, ())
    return arr


def _loc(prefix: Tuple[int, ...]) -> str:
    return "".join(f"[{j}]" for j in prefix)


def array_to_lists(arr: np.ndarray):
    """Object array -> nested lists of canonical text"""
    if arr.ndim == 0:
        return to_text(arr[()])
    return [array_to_lists(arr[j]) for j in range(arr.shape[0])]


def map_array(func: Callable[[ScalarExpr], ScalarExpr], arr: np.ndarray) -> np.ndarray:
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(*arr.shape):
        out[idx] = func(arr[idx])
    return out


def evaluate_array(arr: np.ndarray, env: Env) -> np.ndarray:
    """Evaluate every entry; result shape is arr.shape + the broadcast shape of env values"""
    values = {idx: evaluate(arr[idx], env) for idx in np.ndindex(*arr.shape)}
    point_shape = np.broadcast_shapes(*(np.shape(v) for v in env.values())) if env else ()
    out = np.empty(arr.shape + point_shape, dtype=float)
    for idx, value in values.items():
        out[idx] = value
    return out
