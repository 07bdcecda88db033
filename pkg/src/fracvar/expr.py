"""Small arithmetic expression language.

Grammar (lowest to highest precedence)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | "+" unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

``^`` is right associative and binds tighter than unary minus, so
``-2^2 == -4`` and ``2^3^2 == 512``. Expressions evaluate on floats or on
numpy arrays (elementwise, with broadcasting).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .special import gamma_array

__all__ = [
    "Expr", "Num", "Var", "Neg", "BinOp", "Call",
    "ExprError", "ExprSyntaxError", "UnknownFunctionError",
    "UnboundVariableError", "DomainError",
    "parse", "evaluate", "scalar_function", "free_vars", "to_source", "compile_expr",
    "FUNCTIONS", "CONSTANTS",
]


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.text = text


class UnknownFunctionError(ExprSyntaxError):
    def __init__(self, name: str, offset: int, text: str = ""):
        super().__init__(f"unknown function {name!r}", offset, text)
        self.name = name


class UnboundVariableError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name}")
        self.name = name


class DomainError(ExprError):
    def __init__(self, func: str, value):
        super().__init__(f"domain error in {func} at argument {value!r}")
        self.func = func
        self.value = value


# ---------------------------------------------------------------- AST nodes

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]


# ---------------------------------------------------------------- functions

def _first_bad(arg, bad):
    arr = np.asarray(arg)
    if arr.ndim == 0:
        return float(arr)
    return float(arr[bad][0])


def _log(x):
    bad = np.asarray(x) <= 0
    if np.any(bad):
        raise DomainError("log", _first_bad(x, bad))
    return np.log(x)


def _sqrt(x):
    bad = np.asarray(x) < 0
    if np.any(bad):
        raise DomainError("sqrt", _first_bad(x, bad))
    return np.sqrt(x)


def _gamma(x):
    xa = np.asarray(x, dtype=float)
    bad = (xa <= 0) & (xa == np.floor(xa))
    if np.any(bad):
        raise DomainError("gamma", _first_bad(x, bad))
    out = gamma_array(xa)
    return out if out.ndim else float(out)


def _pow(x, y):
    with np.errstate(all="ignore"):
        out = np.power(x, y)
    if not np.all(np.isfinite(out)):
        bad = ~np.isfinite(out)
        xb = np.broadcast_to(np.asarray(x, dtype=float), np.shape(out))
        raise DomainError("pow", _first_bad(xb, bad))
    return out


# name -> (arity, implementation)
FUNCTIONS = {
    "exp": (1, np.exp),
    "log": (1, _log),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tan": (1, np.tan),
    "sqrt": (1, _sqrt),
    "abs": (1, np.abs),
    "pow": (2, _pow),
    "gamma": (1, _gamma),
}

CONSTANTS = {"pi": math.pi}


# ---------------------------------------------------------------- parser

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def _tokenize(text: str):
    pos = 0
    toks = []
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, off = self.take()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off, self.text)

    def error(self, message):
        raise ExprSyntaxError(message, self.peek()[2], self.text)

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", off, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if val not in FUNCTIONS:
                    raise UnknownFunctionError(val, off, self.text)
                self.take()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[val][0]
                if len(args) != arity:
                    raise ExprSyntaxError(
                        f"{val} takes {arity} argument(s), got {len(args)}", off, self.text)
                return Call(val, tuple(args))
            return Var(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", off, self.text)


def parse(text: str) -> Expr:
    """Parse `text` into an expression tree.

    Errors carry the character offset of the offending token.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text if isinstance(text, str) else "")
    return _Parser(text).parse()


# ---------------------------------------------------------------- printing

def to_source(e: Expr) -> str:
    """Fully parenthesised source text; ``parse(to_source(e)) == e``."""
    if isinstance(e, Num):
        if e.value < 0 or not math.isfinite(e.value):
            raise ValueError(f"literal {e.value!r} has no source form")
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------- analysis

def free_vars(e: Expr) -> set:
    if isinstance(e, Num):
        return set()
    if isinstance(e, Var):
        return set() if e.name in CONSTANTS else {e.name}
    if isinstance(e, Neg):
        return free_vars(e.operand)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Call):
        out = set()
        for a in e.args:
            out |= free_vars(a)
        return out
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------- evaluation

def _check(name, arg, out):
    if np.all(np.isfinite(out)):
        return out
    bad = ~np.isfinite(out)
    argb = np.broadcast_to(np.asarray(arg, dtype=float), np.shape(out))
    raise DomainError(name, _first_bad(argb, bad))


def _eval(e, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.name in CONSTANTS:
            return CONSTANTS[e.name]
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, BinOp):
        lhs = _eval(e.left, env)
        rhs = _eval(e.right, env)
        with np.errstate(all="ignore"):
            if e.op == "+":
                out = np.add(lhs, rhs)
            elif e.op == "-":
                out = np.subtract(lhs, rhs)
            elif e.op == "*":
                out = np.multiply(lhs, rhs)
            elif e.op == "/":
                if np.any(np.asarray(rhs) == 0):
                    raise DomainError("/", 0.0)
                out = np.divide(lhs, rhs)
            else:
                return _pow(lhs, rhs)
        return _check(e.op, lhs, out)
    if isinstance(e, Call):
        fn = FUNCTIONS[e.name][1]
        args = [_eval(a, env) for a in e.args]
        with np.errstate(all="ignore"):
            out = fn(*args)
        return _check(e.name, args[0], out)
    raise TypeError(f"not an expression: {e!r}")


def evaluate(e: Expr, bindings: Mapping[str, object]):
    """Evaluate `e` with variables taken from `bindings`.

    Scalar bindings go through a compiled ``math``-based function; array
    bindings are evaluated elementwise with numpy and give an array of the
    broadcast shape. The two paths may differ in the last ulp.
    """
    if all(isinstance(v, (int, float)) for v in bindings.values()):
        return scalar_function(e)(bindings)
    out = _eval(e, bindings)
    if np.ndim(out) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------- scalar fast path

def _s_div(a, b):
    if b == 0:
        raise DomainError("/", 0.0)
    return a / b


def _s_pow(a, b):
    try:
        out = math.pow(a, b)
    except (ValueError, OverflowError, ZeroDivisionError):
        raise DomainError("pow", a) from None
    return out


def _s_wrap(name, fn):
    def call(a):
        try:
            return fn(a)
        except (ValueError, OverflowError):
            raise DomainError(name, a) from None
    return call


def _s_log(a):
    if a <= 0:
        raise DomainError("log", a)
    return math.log(a)


def _s_gamma(a):
    from .special import PoleError, gamma_fn
    try:
        out = gamma_fn(a)
    except (PoleError, OverflowError):
        raise DomainError("gamma", a) from None
    if not math.isfinite(out):
        raise DomainError("gamma", a)
    return out


_SCALAR_NS = {
    "_div": _s_div,
    "_pow": _s_pow,
    "_f_exp": _s_wrap("exp", math.exp),
    "_f_log": _s_log,
    "_f_sin": _s_wrap("sin", math.sin),
    "_f_cos": _s_wrap("cos", math.cos),
    "_f_tan": _s_wrap("tan", math.tan),
    "_f_sqrt": _s_wrap("sqrt", math.sqrt),
    "_f_abs": abs,
    "_f_pow": _s_pow,
    "_f_gamma": _s_gamma,
}


def _to_py(e):
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        if e.name in CONSTANTS:
            return repr(CONSTANTS[e.name])
        return f"_b[{e.name!r}]"
    if isinstance(e, Neg):
        return f"(-{_to_py(e.operand)})"
    if isinstance(e, BinOp):
        lhs, rhs = _to_py(e.left), _to_py(e.right)
        if e.op == "/":
            return f"_div({lhs}, {rhs})"
        if e.op == "^":
            return f"_pow({lhs}, {rhs})"
        return f"({lhs} {e.op} {rhs})"
    if isinstance(e, Call):
        return f"_f_{e.name}({', '.join(_to_py(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


_SCALAR_CACHE: dict = {}


def scalar_function(e: Expr):
    """Compile `e` to ``f(bindings) -> float`` for scalar bindings.

    Variables missing from the bindings raise :class:`UnboundVariableError`;
    domain problems and non-finite results raise :class:`DomainError`.
    """
    hit = _SCALAR_CACHE.get(id(e))
    if hit is not None and hit[0] is e:
        return hit[1]
    body = _to_py(e)
    code = compile(f"lambda _b: {body}", "<expr>", "eval")
    raw = eval(code, dict(_SCALAR_NS))  # noqa: S307 - source built from a vetted tree

    def fn(bindings):
        try:
            out = raw(bindings)
        except KeyError as exc:
            raise UnboundVariableError(exc.args[0]) from None
        out = float(out)
        if not math.isfinite(out):
            raise DomainError("overflow", out)
        return out

    _SCALAR_CACHE[id(e)] = (e, fn)
    return fn


def compile_expr(e):
    """Accept an expression tree or source text; return the tree."""
    return parse(e) if isinstance(e, str) else e
