"""Scalar expressions over chart coordinates.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right-associative
    primary := NUMBER | IDENT | IDENT '(' args ')' | '(' expr ')'

``pi`` and ``i`` are reserved constants.  Exponents must reduce to a real
constant, so differentiation never needs ``log`` of the base.
"""

from __future__ import annotations

import math
import re
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "Expr", "Num", "Const", "Var", "Neg", "BinOp", "Pow", "Call",
    "ExprError", "ExprSyntaxError", "UnboundCoordinateError", "DomainError",
    "FUNCTIONS", "parse", "differentiate", "evaluate", "evaluate_real",
    "free_coordinates", "substitute", "fold", "to_string", "as_expr",
    "add", "sub", "mul", "div", "neg", "power", "call", "ZERO", "ONE",
]

REAL_TOL = 1e-12

FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1,
    "sinh": 1, "cosh": 1, "atan2": 2,
}
CONSTANTS = ("pi", "i")


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at byte {offset}{detail}")


class UnboundCoordinateError(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound coordinate {name!r}")


class DomainError(ExprError):
    pass


# ---------------------------------------------------------------------------
# nodes
# ---------------------------------------------------------------------------

class Expr:
    """Immutable expression node.  Equality is structural."""

    __slots__ = ("_hash", "_cache")
    _fields: tuple[str, ...] = ()

    def _key(self):
        return tuple(getattr(self, f) for f in self._fields)

    def __eq__(self, other):
        if self is other:
            return True
        if type(self) is not type(other):
            return NotImplemented
        if hash(self) != hash(other):
            return False
        return self._key() == other._key()

    def __hash__(self):
        try:
            return self._hash
        except AttributeError:
            h = hash((type(self).__name__,) + self._key())
            object.__setattr__(self, "_hash", h)
            return h

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(repr(v) for v in self._key())})"

    def __str__(self):
        return to_string(self)

    def _memo(self) -> dict:
        try:
            return self._cache
        except AttributeError:
            object.__setattr__(self, "_cache", {})
            return self._cache

    # arithmetic sugar used by the catalog and tests
    def __add__(self, o): return add(self, as_expr(o))
    def __radd__(self, o): return add(as_expr(o), self)
    def __sub__(self, o): return sub(self, as_expr(o))
    def __rsub__(self, o): return sub(as_expr(o), self)
    def __mul__(self, o): return mul(self, as_expr(o))
    def __rmul__(self, o): return mul(as_expr(o), self)
    def __truediv__(self, o): return div(self, as_expr(o))
    def __rtruediv__(self, o): return div(as_expr(o), self)
    def __neg__(self): return neg(self)

    def __pow__(self, o):
        if isinstance(o, Expr):
            o = _constant_exponent(o, 0)
        return power(self, float(o))


def _init(obj, **fields):
    for k, v in fields.items():
        object.__setattr__(obj, k, v)


class Num(Expr):
    __slots__ = ("value",)
    _fields = ("value",)

    def __init__(self, value: float):
        _init(self, value=float(value))


class Const(Expr):
    __slots__ = ("name",)
    _fields = ("name",)

    def __init__(self, name: str):
        if name not in CONSTANTS:
            raise ExprError(f"unknown constant {name!r}")
        _init(self, name=name)


class Var(Expr):
    __slots__ = ("name",)
    _fields = ("name",)

    def __init__(self, name: str):
        _init(self, name=name)


class Neg(Expr):
    __slots__ = ("arg",)
    _fields = ("arg",)

    def __init__(self, arg: Expr):
        _init(self, arg=arg)


class BinOp(Expr):
    __slots__ = ("op", "left", "right")
    _fields = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in "+-*/":
            raise ExprError(f"bad operator {op!r}")
        _init(self, op=op, left=left, right=right)


class Pow(Expr):
    __slots__ = ("base", "exponent")
    _fields = ("base", "exponent")

    def __init__(self, base: Expr, exponent: float):
        _init(self, base=base, exponent=float(exponent))


class Call(Expr):
    __slots__ = ("fn", "args")
    _fields = ("fn", "args")

    def __init__(self, fn: str, args: tuple[Expr, ...]):
        if fn not in FUNCTIONS:
            raise ExprError(f"unknown function {fn!r}")
        if len(args) != FUNCTIONS[fn]:
            raise ExprError(f"{fn} takes {FUNCTIONS[fn]} argument(s), got {len(args)}")
        _init(self, fn=fn, args=tuple(args))


ZERO = Num(0.0)
ONE = Num(1.0)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    if isinstance(x, (int, float, np.integer, np.floating)):
        return Num(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


# ---------------------------------------------------------------------------
# smart constructors (fold literal arithmetic, drop 0/1 identities)
# ---------------------------------------------------------------------------

def _num(e: Expr) -> float | None:
    return e.value if isinstance(e, Num) else None


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    x, y = _num(a), _num(b)
    if x is not None and y is not None:
        return Num(x + y)
    if x == 0.0:
        return b
    if y == 0.0:
        return a
    if isinstance(b, Neg):
        return BinOp("-", a, b.arg)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    x, y = _num(a), _num(b)
    if x is not None and y is not None:
        return Num(x - y)
    if y == 0.0:
        return a
    if x == 0.0:
        return neg(b)
    if isinstance(b, Neg):
        return BinOp("+", a, b.arg)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    x, y = _num(a), _num(b)
    if x is not None and y is not None:
        return Num(x * y)
    if x == 0.0 or y == 0.0:
        return ZERO
    if x == 1.0:
        return b
    if y == 1.0:
        return a
    if x == -1.0:
        return neg(b)
    if y == -1.0:
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    x, y = _num(a), _num(b)
    if x is not None and y is not None and y != 0.0:
        return Num(x / y)
    if x == 0.0 and y != 0.0:
        return ZERO
    if y == 1.0:
        return a
    return BinOp("/", a, b)


def power(a: Expr, p: float) -> Expr:
    p = float(p)
    if p == 0.0:
        return ONE
    if p == 1.0:
        return a
    x = _num(a)
    if x is not None and (x > 0 or (p.is_integer() and (x != 0 or p > 0))):
        return Num(x ** int(p) if p.is_integer() else x ** p)
    return Pow(a, p)


def call(fn: str, *args: Expr) -> Expr:
    return Call(fn, tuple(args))


def fold(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the smart constructors."""
    memo = e._memo()
    if "fold" in memo:
        return memo["fold"]
    if isinstance(e, Neg):
        out = neg(fold(e.arg))
    elif isinstance(e, BinOp):
        out = _BUILD[e.op](fold(e.left), fold(e.right))
    elif isinstance(e, Pow):
        out = power(fold(e.base), e.exponent)
    elif isinstance(e, Call):
        out = Call(e.fn, tuple(fold(a) for a in e.args))
    else:
        out = e
    memo["fold"] = out
    return out


_BUILD = {"+": add, "-": sub, "*": mul, "/": div}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.raw = text.encode("utf-8")
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        n = len(text)
        while pos < n:
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                if text[pos:].strip() == "":
                    break
                off = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
                raise ExprSyntaxError(
                    f"unexpected character {text[off]!r}", self._byte(off),
                    ("number", "identifier", "operator"))
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def _byte(self, char_offset: int) -> int:
        return len(self.text[:char_offset].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, val, off = self.peek()
        what = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", self._byte(off), expected)

    def expect(self, val):
        if self.peek()[1] != val or self.peek()[0] == "end":
            self.fail((repr(val),))
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(("'+'", "'-'", "'*'", "'/'", "'^'", "end of input"))
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            arg = self.unary()
            # a negated literal is stored as a negative literal so that
            # printing "(-2)" re-parses to the same tree
            return Num(-arg.value) if isinstance(arg, Num) else Neg(arg)
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            _, _, off = self.take()
            exp = self.unary()
            return Pow(base, _constant_exponent(exp, self._byte(off)))
        return base

    def primary(self) -> Expr:
        kind, val, off = self.peek()
        if kind == "num":
            self.take()
            return Num(float(val))
        if kind == "ident":
            self.take()
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {val!r}", self._byte(off),
                                          FUNCTIONS)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == "," and self.peek()[0] == "op":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[val]:
                    raise ExprSyntaxError(
                        f"{val} takes {FUNCTIONS[val]} argument(s), got {len(args)}",
                        self._byte(off))
                return Call(val, tuple(args))
            if val in CONSTANTS:
                return Const(val)
            if val in FUNCTIONS:
                raise ExprSyntaxError(f"function {val!r} used without arguments",
                                      self._byte(off), ("'('",))
            return Var(val)
        if kind == "op" and val == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        self.fail(("number", "identifier", "'('", "'-'"))


def _constant_exponent(e: Expr, offset: int) -> float:
    if free_coordinates(e):
        raise ExprSyntaxError("exponent must be a constant", offset)
    v = complex(_eval_scalar(e, {}))
    if abs(v.imag) > REAL_TOL or not math.isfinite(v.real):
        raise ExprSyntaxError("exponent must be a finite real constant", offset)
    return v.real


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printer
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


def _fmt_num(x: float) -> str:
    if x.is_integer() and abs(x) < 1e16:
        s = str(int(x))
        if x == 0 and math.copysign(1.0, x) < 0:
            s = "-0.0"
    else:
        s = repr(x)
    return f"({s})" if s.startswith("-") else s


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def to_string(e: Expr) -> str:
    """Render ``e`` with the minimal parentheses that re-parse to ``e``."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, (Const, Var)):
        return e.name
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if _prec(e.arg) < _PREC_NEG or isinstance(e.arg, Num):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left = to_string(e.left)
        if _prec(e.left) < p:
            left = f"({left})"
        right = to_string(e.right)
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}" if p == 1 else f"{left}{e.op}{right}"
    if isinstance(e, Pow):
        base = to_string(e.base)
        if _prec(e.base) <= _PREC_POW:
            base = f"({base})"
        return f"{base}^{_fmt_num(e.exponent)}"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_string(a) for a in e.args)})"
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------

def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Neg):
        return (e.arg,)
    if isinstance(e, BinOp):
        return (e.left, e.right)
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, Call):
        return e.args
    return ()


def free_coordinates(e: Expr) -> frozenset[str]:
    memo = e._memo()
    if "free" not in memo:
        if isinstance(e, Var):
            memo["free"] = frozenset((e.name,))
        else:
            out: frozenset[str] = frozenset()
            for c in _children(e):
                out |= free_coordinates(c)
            memo["free"] = out
    return memo["free"]


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace coordinates by expressions, simultaneously."""
    memo: dict[int, Expr] = {}

    def go(x: Expr) -> Expr:
        k = id(x)
        if k in memo:
            return memo[k]
        if not (free_coordinates(x) & mapping.keys()):
            out = x
        elif isinstance(x, Var):
            out = mapping[x.name]
        elif isinstance(x, Neg):
            out = neg(go(x.arg))
        elif isinstance(x, BinOp):
            out = _BUILD[x.op](go(x.left), go(x.right))
        elif isinstance(x, Pow):
            out = power(go(x.base), x.exponent)
        else:
            out = Call(x.fn, tuple(go(a) for a in x.args))
        memo[k] = out
        return out

    mapping = {k: as_expr(v) for k, v in mapping.items()}
    return go(e)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def differentiate(e: Expr, coord: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``coord``."""
    memo = e._memo().setdefault("d", {})
    if coord in memo:
        return memo[coord]
    if coord not in free_coordinates(e):
        out = ZERO
    elif isinstance(e, Var):
        out = ONE
    elif isinstance(e, Neg):
        out = neg(differentiate(e.arg, coord))
    elif isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = differentiate(a, coord), differentiate(b, coord)
        if e.op == "+":
            out = add(da, db)
        elif e.op == "-":
            out = sub(da, db)
        elif e.op == "*":
            out = add(mul(da, b), mul(a, db))
        else:
            # (a/b)' = a'/b - a*b'/b^2
            out = sub(div(da, b), div(mul(a, db), power(b, 2)))
    elif isinstance(e, Pow):
        p = e.exponent
        out = mul(mul(Num(p), power(e.base, p - 1)), differentiate(e.base, coord))
    else:
        out = _diff_call(e, coord)
    memo[coord] = out
    return out


def _diff_call(e: Call, coord: str) -> Expr:
    if e.fn == "atan2":
        y, x = e.args
        dy, dx = differentiate(y, coord), differentiate(x, coord)
        num = sub(mul(x, dy), mul(y, dx))
        return div(num, add(power(x, 2), power(y, 2)))
    (a,) = e.args
    inner = differentiate(a, coord)
    fn = e.fn
    if fn == "sin":
        outer = call("cos", a)
    elif fn == "cos":
        outer = neg(call("sin", a))
    elif fn == "tan":
        outer = div(ONE, power(call("cos", a), 2))
    elif fn == "exp":
        outer = e
    elif fn == "log":
        outer = div(ONE, a)
    elif fn == "sqrt":
        outer = div(Num(0.5), e)
    elif fn == "sinh":
        outer = call("cosh", a)
    else:
        outer = call("sinh", a)
    return mul(outer, inner)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _atan2(y, x):
    y = np.asarray(y, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if np.any(np.abs(y.imag) > REAL_TOL) or np.any(np.abs(x.imag) > REAL_TOL):
        raise DomainError("atan2 of a value with nonzero imaginary part")
    return np.arctan2(y.real, x.real).astype(complex)


_NP = {
    "sin": "np.sin", "cos": "np.cos", "tan": "np.tan", "exp": "np.exp",
    "log": "np.log", "sqrt": "np.sqrt", "sinh": "np.sinh", "cosh": "np.cosh",
    "atan2": "_atan2",
}


def compile_expr(e: Expr, names: tuple[str, ...]) -> Callable:
    """Return ``f(*values)`` evaluating ``e`` with coordinates bound positionally.

    Arguments may be complex scalars or arrays; the result broadcasts against
    them.  Identical subtrees are evaluated once.
    """
    names = tuple(names)
    cache = e._memo().setdefault("compiled", {})
    if names in cache:
        return cache[names]
    missing = free_coordinates(e) - set(names)
    if missing:
        raise UnboundCoordinateError(sorted(missing)[0])
    lines: list[str] = []
    slots: dict[Expr, str] = {}
    consts: dict[str, complex] = {}
    argmap = {n: f"a{k}" for k, n in enumerate(names)}

    def emit(x: Expr) -> str:
        if x in slots:
            return slots[x]
        if isinstance(x, Num):
            ref = f"c{len(consts)}"
            consts[ref] = complex(x.value)
        elif isinstance(x, Const):
            ref = f"c{len(consts)}"
            consts[ref] = complex(math.pi) if x.name == "pi" else 1j
        elif isinstance(x, Var):
            ref = argmap[x.name]
        else:
            if isinstance(x, Neg):
                code = f"-{emit(x.arg)}"
            elif isinstance(x, BinOp):
                code = f"{emit(x.left)} {x.op} {emit(x.right)}"
            elif isinstance(x, Pow):
                p = x.exponent
                b = emit(x.base)
                if p.is_integer() and abs(p) <= 64:
                    code = f"{b} ** {int(p)}"
                else:
                    code = f"np.power({b}, {p!r})"
            else:
                code = f"{_NP[x.fn]}({', '.join(emit(a) for a in x.args)})"
            ref = f"t{len(lines)}"
            lines.append(f"    {ref} = {code}")
        slots[x] = ref
        return ref

    result = emit(e)
    args = ", ".join(argmap[n] for n in names)
    src = f"def _f({args}):\n" + "\n".join(lines) + ("\n" if lines else "") + \
        f"    return {result}\n"
    ns = {"np": np, "_atan2": _atan2, **consts}
    exec(compile(src, "<expr>", "exec"), ns)
    fn = ns["_f"]
    cache[names] = fn
    return fn


def _eval_scalar(e: Expr, bindings: Mapping[str, complex]) -> complex:
    names = tuple(sorted(free_coordinates(e)))
    for n in names:
        if n not in bindings:
            raise UnboundCoordinateError(n)
    fn = compile_expr(e, names)
    with np.errstate(all="ignore"):
        return complex(fn(*(np.complex128(bindings[n]) for n in names)))


def evaluate(e: Expr | str, bindings: Mapping[str, complex] | None = None):
    """Evaluate at complex bindings.

    Scalar bindings give a Python ``complex``; array bindings give a complex
    array of the broadcast shape.
    """
    e = as_expr(e)
    bindings = bindings or {}
    names = tuple(sorted(free_coordinates(e)))
    for n in names:
        if n not in bindings:
            raise UnboundCoordinateError(n)
    vals = [np.asarray(bindings[n], dtype=complex) for n in names]
    if all(v.ndim == 0 for v in vals):
        return _eval_scalar(e, bindings)
    fn = compile_expr(e, names)
    with np.errstate(all="ignore"):
        out = fn(*vals)
    shape = np.broadcast_shapes(*(v.shape for v in vals))
    return np.broadcast_to(np.asarray(out, dtype=complex), shape).copy()


def evaluate_real(e: Expr | str, bindings: Mapping[str, complex] | None = None,
                  tol: float = REAL_TOL):
    """Evaluate in a real-typed context; reject imaginary parts above ``tol``."""
    v = evaluate(e, bindings)
    imag = np.max(np.abs(np.imag(v))) if np.ndim(v) else abs(v.imag)
    if imag > tol or not np.all(np.isfinite(np.real(v))):
        raise DomainError(f"non-real value in real context: {to_string(as_expr(e))}")
    return np.real(v) if np.ndim(v) else float(v.real)
