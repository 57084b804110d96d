"""Analytic scalar expressions in ``x, y, z`` and named constants.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = primary [ "^" unary ] ;            (* right associative *)
    primary = number | name | call | "(" expr ")" ;
    call    = func "(" expr ")" | "pow" "(" expr "," expr ")" ;
    func    = "sin" | "cos" | "tan" | "exp" | "log" | "sqrt" | "abs" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ exponent ] ;
    name    = [A-Za-z_] { [A-Za-z0-9_] } ;

Evaluation accepts floats or numpy arrays for every name, so a whole grid of
points can be pushed through one tree walk.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UndeclaredNameError",
    "ExprDomainError",
    "NonDifferentiableError",
    "Expression",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "SystemDef",
    "VARIABLES",
    "FUNCTIONS",
    "parse",
    "to_string",
    "evaluate",
    "evaluate_with_gradient",
    "evaluate_magnitude",
    "substitute",
    "to_source",
]

VARIABLES = ("x", "y", "z")
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")

Number = Union[float, np.ndarray]


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UndeclaredNameError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"undeclared identifier '{name}' at offset {offset}")
        self.name = name
        self.offset = offset


class ExprDomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, node: "Expression"):
        super().__init__(f"{message} in '{to_string(node)}'")
        self.node = node


class NonDifferentiableError(ExprDomainError):
    pass


# --------------------------------------------------------------------------
# tree


class Expression:
    """Base class of the immutable expression tree."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Const(Expression):
    value: Union[int, float]


@dataclass(frozen=True)
class Var(Expression):
    name: str


@dataclass(frozen=True)
class Unary(Expression):
    op: str  # "neg" or one of FUNCTIONS
    arg: Expression


@dataclass(frozen=True)
class Binary(Expression):
    op: str  # one of + - * / ^
    left: Expression
    right: Expression


@dataclass(frozen=True)
class SystemDef:
    """Planar vector field ``x' = F(x, y, z)``, ``y' = G(x, y, z)``."""

    F: Expression
    G: Expression
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        allowed = set(VARIABLES) | set(self.constants)
        for label, e in (("F", self.F), ("G", self.G)):
            unknown = _names(e) - allowed
            if unknown:
                raise UndeclaredNameError(sorted(unknown)[0], -1)

    @classmethod
    def from_strings(cls, F: str, G: str, constants: Mapping[str, float] | None = None) -> "SystemDef":
        constants = dict(constants or {})
        names = list(VARIABLES) + list(constants)
        return cls(parse(F, names), parse(G, names), constants)

    def env(self, x: Number, y: Number, z: Number) -> dict:
        env = dict(self.constants)
        env.update(x=x, y=y, z=z)
        return env

    def eval_F(self, x, y, z):
        return evaluate(self.F, self.env(x, y, z))

    def eval_G(self, x, y, z):
        return evaluate(self.G, self.env(x, y, z))

    def grad_F(self, x, y, z):
        return evaluate_with_gradient(self.F, self.env(x, y, z))

    def grad_G(self, x, y, z):
        return evaluate_with_gradient(self.G, self.env(x, y, z))

    def shifted(self, c: float) -> "SystemDef":
        """Same system with the parameter ``z`` replaced by ``z + c``."""
        repl = Binary("+", Var("z"), Const(c))
        return SystemDef(substitute(self.F, "z", repl), substitute(self.G, "z", repl), dict(self.constants))


def _names(e: Expression) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return _names(e.arg)
    if isinstance(e, Binary):
        return _names(e.left) | _names(e.right)
    return set()


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    # token offsets are byte offsets into the UTF-8 encoded text
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), _byte_offset(text, m.start(kind))))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(text, n)))
    return tokens


class _Parser:
    def __init__(self, text: str, declared):
        self.text = text
        self.declared = set(declared)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.peek()
        if val != value or kind != "op":
            where = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {where}", pos)
        self.advance()

    def parse(self) -> Expression:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", pos)
        return e

    def expr(self) -> Expression:
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            left = Binary(op, left, self.term())
        return left

    def term(self) -> Expression:
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            left = Binary(op, left, self.unary())
        return left

    def unary(self) -> Expression:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Unary("neg", self.unary())
        if kind == "op" and val == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expression:
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def primary(self) -> Expression:
        kind, val, pos = self.advance()
        if kind == "num":
            if re.fullmatch(r"\d+", val):
                return Const(int(val))
            return Const(float(val))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val in FUNCTIONS:
                    self.advance()
                    arg = self.expr()
                    self.expect(")")
                    return Unary(val, arg)
                if val == "pow":
                    self.advance()
                    base = self.expr()
                    self.expect(",")
                    exponent = self.expr()
                    self.expect(")")
                    return Binary("^", base, exponent)
                raise ExprSyntaxError(f"unknown function {val!r}", pos)
            if val not in self.declared:
                raise UndeclaredNameError(val, pos)
            return Var(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos)
        raise ExprSyntaxError(f"unexpected token {val!r}", pos)


def parse(text: str, declared_names=VARIABLES) -> Expression:
    """Parse ``text``; every identifier must be in ``declared_names``."""
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text, declared_names).parse()


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_const(v) -> str:
    if isinstance(v, int) and not isinstance(v, bool):
        return str(v)
    return repr(float(v))


def to_string(e: Expression) -> str:
    """Render with the minimal parentheses needed to re-parse to the same tree."""
    return _fmt(e)[0]


def _fmt(e: Expression) -> tuple[str, int]:
    if isinstance(e, Const):
        s = _fmt_const(e.value)
        # negative literals never come out of the parser; keep them atomic
        return (f"({s})", 5) if s.startswith("-") else (s, 5)
    if isinstance(e, Var):
        return e.name, 5
    if isinstance(e, Unary):
        if e.op == "neg":
            s, p = _fmt(e.arg)
            # operand of unary minus is itself a unary-level expression
            return ("-" + (s if p >= 3 else f"({s})"), 3)
        return f"{e.op}({_fmt(e.arg)[0]})", 5
    if isinstance(e, Binary):
        prec = _PREC[e.op]
        ls, lp = _fmt(e.left)
        rs, rp = _fmt(e.right)
        if e.op == "^":
            # base must be primary; exponent may be any unary-level expression
            ls = ls if lp >= 5 else f"({ls})"
            rs = rs if rp >= 3 else f"({rs})"
        else:
            ls = ls if lp >= prec else f"({ls})"
            rs = rs if rp > prec else f"({rs})"
        return f"{ls} {e.op} {rs}" if prec < 4 else f"{ls}^{rs}", prec
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# evaluation


def _int_exponent(e: Expression):
    if isinstance(e, Const):
        v = e.value
        if isinstance(v, int) or (isinstance(v, float) and v.is_integer() and abs(v) < 2**31):
            return int(v)
    if isinstance(e, Unary) and e.op == "neg":
        k = _int_exponent(e.arg)
        return None if k is None else -k
    return None


def _ipow(base, k: int):
    """``base**k`` by repeated squaring (k >= 0)."""
    result = np.ones_like(base, dtype=float) if isinstance(base, np.ndarray) else 1.0
    b = base
    while k:
        if k & 1:
            result = result * b
        k >>= 1
        if k:
            b = b * b
    return result


def _any(mask) -> bool:
    return bool(np.any(mask))


def _lookup(e: Var, env):
    try:
        return env[e.name]
    except KeyError:
        raise ExprError(f"no value assigned to '{e.name}'") from None


def evaluate(e: Expression, env: Mapping[str, Number]) -> Number:
    """Evaluate the tree in IEEE double precision."""
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        return _lookup(e, env)
    if isinstance(e, Unary):
        a = evaluate(e.arg, env)
        op = e.op
        if op == "neg":
            return -a
        if op == "log":
            if _any(np.asarray(a) <= 0):
                raise ExprDomainError("log of non-positive argument", e)
            return np.log(a)
        if op == "sqrt":
            if _any(np.asarray(a) < 0):
                raise ExprDomainError("sqrt of negative argument", e)
            return np.sqrt(a)
        return _UFUNC[op](a)
    if isinstance(e, Binary):
        a = evaluate(e.left, env)
        if e.op == "^":
            k = _int_exponent(e.right)
            if k is not None:
                if k >= 0:
                    return _ipow(a, k)
                if _any(np.asarray(a) == 0):
                    raise ExprDomainError("zero raised to a negative power", e)
                return 1.0 / _ipow(a, -k)
            b = evaluate(e.right, env)
            _check_real_pow(a, b, e)
            return np.power(a, b)
        b = evaluate(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if _any(np.asarray(b) == 0):
                raise ExprDomainError("division by zero", e)
            return a / b
    raise TypeError(f"not an expression node: {e!r}")


def _check_real_pow(a, b, e):
    a_arr, b_arr = np.asarray(a), np.asarray(b)
    bad = (a_arr < 0) | ((a_arr == 0) & (b_arr <= 0))
    if _any(bad):
        raise ExprDomainError("non-integer power needs a positive base", e)


_UFUNC = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "abs": np.abs,
}


def evaluate_with_gradient(e: Expression, env: Mapping[str, Number]):
    """Value and exact partials ``(d/dx, d/dy, d/dz)`` by forward-mode duals."""
    v, g = _dual(e, env)
    return v, tuple(g)


_ZERO = (0.0, 0.0, 0.0)


def _dual(e: Expression, env):
    if isinstance(e, Const):
        return float(e.value), _ZERO
    if isinstance(e, Var):
        v = _lookup(e, env)
        if e.name == "x":
            return v, (1.0, 0.0, 0.0)
        if e.name == "y":
            return v, (0.0, 1.0, 0.0)
        if e.name == "z":
            return v, (0.0, 0.0, 1.0)
        return v, _ZERO
    if isinstance(e, Unary):
        a, da = _dual(e.arg, env)
        op = e.op
        if op == "neg":
            return -a, tuple(-d for d in da)
        if op == "sin":
            v, s = np.sin(a), np.cos(a)
        elif op == "cos":
            v, s = np.cos(a), -np.sin(a)
        elif op == "tan":
            v = np.tan(a)
            s = 1.0 + v * v
        elif op == "exp":
            v = np.exp(a)
            s = v
        elif op == "log":
            if _any(np.asarray(a) <= 0):
                raise ExprDomainError("log of non-positive argument", e)
            v, s = np.log(a), 1.0 / a
        elif op == "sqrt":
            if _any(np.asarray(a) < 0):
                raise ExprDomainError("sqrt of negative argument", e)
            v = np.sqrt(a)
            if _any(v == 0):
                raise NonDifferentiableError("sqrt at zero", e)
            s = 0.5 / v
        elif op == "abs":
            if _any(np.asarray(a) == 0):
                raise NonDifferentiableError("abs at zero", e)
            v, s = np.abs(a), np.sign(a)
        else:
            raise TypeError(op)
        return v, tuple(s * d for d in da)
    if isinstance(e, Binary):
        a, da = _dual(e.left, env)
        if e.op == "^":
            k = _int_exponent(e.right)
            if k is not None:
                if k == 0:
                    return evaluate(e, env), _ZERO
                if k < 0 and _any(np.asarray(a) == 0):
                    raise ExprDomainError("zero raised to a negative power", e)
                pk1 = _ipow(a, k - 1) if k > 0 else 1.0 / _ipow(a, 1 - k)
                return pk1 * a, tuple(k * pk1 * d for d in da)
            b, db = _dual(e.right, env)
            _check_real_pow(a, b, e)
            if _any(np.asarray(a) == 0):
                raise NonDifferentiableError("non-integer power at zero base", e)
            v = np.power(a, b)
            la = np.log(a)
            return v, tuple(v * (b * d1 / a + d2 * la) for d1, d2 in zip(da, db))
        b, db = _dual(e.right, env)
        if e.op == "+":
            return a + b, tuple(p + q for p, q in zip(da, db))
        if e.op == "-":
            return a - b, tuple(p - q for p, q in zip(da, db))
        if e.op == "*":
            return a * b, tuple(p * b + a * q for p, q in zip(da, db))
        if e.op == "/":
            if _any(np.asarray(b) == 0):
                raise ExprDomainError("division by zero", e)
            v = a / b
            return v, tuple((p - v * q) / b for p, q in zip(da, db))
    raise TypeError(f"not an expression node: {e!r}")


def evaluate_magnitude(e: Expression, env: Mapping[str, Number]) -> Number:
    """Sum of absolute values of intermediate terms.

    ``eps * evaluate_magnitude(e, env)`` bounds the rounding error of
    :func:`evaluate` to first order; used as the noise scale when a residual
    built from ``e`` cancels to far below its own terms.
    """
    if isinstance(e, Const):
        return abs(float(e.value))
    if isinstance(e, Var):
        return np.abs(_lookup(e, env))
    if isinstance(e, Unary):
        if e.op == "neg":
            return evaluate_magnitude(e.arg, env)
        return np.abs(evaluate(e, env))
    if isinstance(e, Binary):
        if e.op in "+-":
            return evaluate_magnitude(e.left, env) + evaluate_magnitude(e.right, env)
        if e.op == "*":
            return evaluate_magnitude(e.left, env) * evaluate_magnitude(e.right, env)
        if e.op == "/":
            return evaluate_magnitude(e.left, env) / np.abs(evaluate(e.right, env))
        return np.abs(evaluate(e, env))
    raise TypeError(f"not an expression node: {e!r}")


def substitute(e: Expression, name: str, replacement: Expression) -> Expression:
    if isinstance(e, Var):
        return replacement if e.name == name else e
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.arg, name, replacement))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.left, name, replacement), substitute(e.right, name, replacement))
    return e


def to_source(e: Expression, constants: Mapping[str, float] | None = None) -> str:
    """Python source for ``e`` using ``math`` functions, constants inlined."""
    constants = constants or {}

    def go(n: Expression) -> str:
        if isinstance(n, Const):
            return repr(float(n.value))
        if isinstance(n, Var):
            if n.name in constants:
                return repr(float(constants[n.name]))
            return n.name
        if isinstance(n, Unary):
            if n.op == "neg":
                return f"(-{go(n.arg)})"
            fn = "abs" if n.op == "abs" else f"math.{n.op}"
            return f"{fn}({go(n.arg)})"
        if isinstance(n, Binary):
            if n.op == "^":
                k = _int_exponent(n.right)
                if k is not None and 0 <= k <= 8:
                    if k == 0:
                        return "1.0"
                    b = go(n.left)
                    return "(" + "*".join([b] * k) + ")"
                if k is not None:
                    return f"({go(n.left)}**{k})"
                return f"math.pow({go(n.left)}, {go(n.right)})"
            return f"({go(n.left)} {n.op} {go(n.right)})"
        raise TypeError(n)

    return go(e)
