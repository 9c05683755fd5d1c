"""Expression trees for the map DSL: parse, print, evaluate, differentiate, simplify.

An :class:`Expr` is an immutable node. Variables are 1-based indices, so
``x1`` is ``Expr("var", value=1)``. Sums and products are n-ary; powers carry
a :class:`fractions.Fraction` exponent.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "log")


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class EvaluationError(ValueError):
    """Raised when an expression is evaluated outside its domain."""


@dataclass(frozen=True)
class Expr:
    kind: str
    args: tuple = ()
    value: object = None

    # arithmetic sugar; these build raw (unsimplified) nodes
    def __add__(self, other):
        return Expr("sum", (self, as_expr(other)))

    def __radd__(self, other):
        return Expr("sum", (as_expr(other), self))

    def __sub__(self, other):
        return Expr("sum", (self, Expr("neg", (as_expr(other),))))

    def __rsub__(self, other):
        return Expr("sum", (as_expr(other), Expr("neg", (self,))))

    def __mul__(self, other):
        return Expr("prod", (self, as_expr(other)))

    def __rmul__(self, other):
        return Expr("prod", (as_expr(other), self))

    def __truediv__(self, other):
        return Expr("quot", (self, as_expr(other)))

    def __rtruediv__(self, other):
        return Expr("quot", (as_expr(other), self))

    def __neg__(self):
        return Expr("neg", (self,))

    def __pow__(self, r):
        return Expr("pow", (self,), Fraction(r))

    def __str__(self):
        return to_text(self)


def const(v: float) -> Expr:
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"non-finite constant {v!r}")
    return Expr("const", (), v)


def var(i: int) -> Expr:
    if i < 1:
        raise ValueError("variable indices start at 1")
    return Expr("var", (), int(i))


def func(name: str, arg: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    return Expr(name, (arg,))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return const(x)


ZERO = const(0.0)
ONE = const(1.0)


def is_const(e: Expr, v: float | None = None) -> bool:
    return e.kind == "const" and (v is None or e.value == v)


def variables(e: Expr) -> set[int]:
    if e.kind == "var":
        return {e.value}
    out: set[int] = set()
    for a in e.args:
        out |= variables(a)
    return out


def substitute(e: Expr, mapping: Mapping[int, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if e.kind == "var":
        return mapping.get(e.value, e)
    if not e.args:
        return e
    return Expr(e.kind, tuple(substitute(a, mapping) for a in e.args), e.value)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        col = pos - line_start + 1
        if kind == "ws":
            nl = tok.count("\n")
            if nl:
                line += nl
                line_start = pos + tok.rindex("\n") + 1
        else:
            tokens.append((kind, tok, line, col))
        pos = m.end()
    tokens.append(("end", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int, names: Mapping[str, int] | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.n = n
        self.names = names

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return ParseError(msg, tok[2], tok[3])

    def expect(self, text):
        tok = self.take()
        if tok[1] != text:
            raise self.error(f"expected {text!r}, found {tok[1] or 'end of input'!r}", tok)
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek()[1] in "+-" and self.peek()[0] == "op":
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else Expr("neg", (t,)))
        return terms[0] if len(terms) == 1 else Expr("sum", tuple(terms))

    def term(self) -> Expr:
        factors = [self.factor()]
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            f = self.factor()
            if op == "*":
                factors.append(f)
            else:
                left = factors[0] if len(factors) == 1 else Expr("prod", tuple(factors))
                factors = [Expr("quot", (left, f))]
        return factors[0] if len(factors) == 1 else Expr("prod", tuple(factors))

    def factor(self) -> Expr:
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return Expr("neg", (self.factor(),))
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return Expr("pow", (base,), self.rational())
        return base

    def _integer(self) -> int:
        tok = self.take()
        if tok[0] != "number" or not tok[1].isdigit():
            raise self.error("expected an integer exponent", tok)
        return int(tok[1])

    def rational(self) -> Fraction:
        if self.peek()[1] == "(":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            r = Fraction(self._integer())
            if self.peek()[1] == "/":
                self.take()
                r /= self._nonzero_integer()
            self.expect(")")
            return sign * r
        r = Fraction(self._integer())
        # bare p/q exponent, as in x^1/2
        if self.peek()[1] == "/" and self.toks[self.i + 1][0] == "number" and self.toks[self.i + 1][1].isdigit():
            self.take()
            r /= self._nonzero_integer()
        return r

    def _nonzero_integer(self) -> int:
        tok = self.peek()
        q = self._integer()
        if q == 0:
            raise self.error("zero denominator in exponent", tok)
        return q

    def atom(self) -> Expr:
        tok = self.take()
        kind, text = tok[0], tok[1]
        if kind == "number":
            return const(float(text))
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Expr(text, (arg,))
            if text == "pi":
                return const(math.pi)
            if self.names is not None:
                if text in self.names:
                    return var(self.names[text])
                raise self.error(f"unknown identifier {text!r}", tok)
            m = re.fullmatch(r"x(\d+)", text)
            if m is None:
                raise self.error(f"unknown identifier {text!r}", tok)
            idx = int(m.group(1))
            if idx < 1 or idx > self.n:
                raise self.error(f"variable {text} out of range for dimension {self.n}", tok)
            return var(idx)
        raise self.error(f"unexpected {text or 'end of input'!r}", tok)


def parse(text: str, n: int, names: Mapping[str, int] | None = None) -> Expr:
    """Parse DSL source over variables ``x1..xn``.

    ``names`` replaces the ``x<i>`` convention with an explicit symbol table,
    e.g. ``{"t1": 1, "t2": 2, "k": 3}`` for parametric patches.
    """
    return _Parser(text, n, names).parse()


# ---------------------------------------------------------------------------
# printing

_ATOMIC = {"const", "var", "sin", "cos", "exp", "log", "pow"}


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(e: Expr, names: Sequence[str] | None = None) -> str:
    """Render an expression in DSL syntax; parsed trees round-trip exactly."""

    def name(i):
        return names[i - 1] if names else f"x{i}"

    def go(e: Expr) -> str:
        k = e.kind
        if k == "const":
            return _num(e.value) if e.value >= 0 else f"(-{_num(-e.value)})"
        if k == "var":
            return name(e.value)
        if k in FUNCTIONS:
            return f"{k}({go(e.args[0])})"
        if k == "neg":
            u = e.args[0]
            s = go(u)
            return "-" + (s if u.kind in _ATOMIC or u.kind == "neg" else f"({s})")
        if k == "pow":
            u = e.args[0]
            s = go(u)
            if u.kind not in ("var", "sin", "cos", "exp", "log") and not (u.kind == "const" and u.value >= 0):
                s = f"({s})"
            r = e.value
            if r.denominator == 1 and r >= 0:
                return f"{s}^{r.numerator}"
            return f"{s}^({r.numerator}/{r.denominator})" if r.denominator != 1 else f"{s}^({r.numerator})"
        if k == "sum":
            parts = []
            for j, a in enumerate(e.args):
                if j == 0:
                    parts.append(f"({go(a)})" if a.kind == "sum" else go(a))
                elif a.kind == "neg":
                    u = a.args[0]
                    parts.append(" - " + (f"({go(u)})" if u.kind == "sum" else go(u)))
                elif a.kind == "const" and a.value < 0:
                    parts.append(" - " + _num(-a.value))
                elif a.kind == "prod" and a.args[0].kind == "const" and a.args[0].value < 0:
                    c = -a.args[0].value
                    rest = a.args[1:] if c == 1.0 else (const(c),) + a.args[1:]
                    u = rest[0] if len(rest) == 1 else Expr("prod", rest)
                    parts.append(" - " + go(u))
                else:
                    parts.append(" + " + (f"({go(a)})" if a.kind == "sum" else go(a)))
            return "".join(parts)
        if k == "prod":
            parts = []
            for j, a in enumerate(e.args):
                s = go(a)
                if a.kind in ("sum", "prod") or (a.kind == "quot" and j > 0):
                    s = f"({s})"
                parts.append(s)
            return "*".join(parts)
        if k == "quot":
            a, b = e.args
            sa = f"({go(a)})" if a.kind == "sum" else go(a)
            sb = go(b)
            # a bare number after x^2/ would read as a rational exponent
            if (b.kind not in _ATOMIC and b.kind != "neg") or b.kind == "const":
                sb = f"({sb})"
            return f"{sa}/{sb}"
        raise ValueError(f"unknown node kind {k!r}")

    return go(e)


# ---------------------------------------------------------------------------
# evaluation


def _rpow(base: float, r: Fraction) -> float:
    if r.denominator == 1:
        if base == 0.0 and r < 0:
            raise EvaluationError("division by zero in negative power")
        return base ** int(r)
    if base < 0:
        if r.denominator % 2 == 0:
            raise EvaluationError(f"even root of negative number {base!r}")
        return -((-base) ** float(r))
    if base == 0.0 and r < 0:
        raise EvaluationError("division by zero in negative power")
    return base ** float(r)


def evaluate(e: Expr, p: Sequence[float]) -> float:
    """Evaluate at a point; domain violations raise :class:`EvaluationError`."""
    k = e.kind
    if k == "const":
        return e.value
    if k == "var":
        return float(p[e.value - 1])
    if k == "sum":
        return math.fsum(evaluate(a, p) for a in e.args)
    if k == "prod":
        out = 1.0
        for a in e.args:
            out *= evaluate(a, p)
        return out
    if k == "quot":
        den = evaluate(e.args[1], p)
        if den == 0.0:
            raise EvaluationError("division by zero")
        return evaluate(e.args[0], p) / den
    if k == "neg":
        return -evaluate(e.args[0], p)
    if k == "pow":
        return _rpow(evaluate(e.args[0], p), e.value)
    u = evaluate(e.args[0], p)
    if k == "sin":
        return math.sin(u)
    if k == "cos":
        return math.cos(u)
    if k == "exp":
        try:
            return math.exp(u)
        except OverflowError as exc:
            raise EvaluationError(f"exp overflow at {u!r}") from exc
    if k == "log":
        if u <= 0.0:
            raise EvaluationError(f"log of non-positive value {u!r}")
        return math.log(u)
    raise ValueError(f"unknown node kind {k!r}")


def _py(e: Expr, mod: str) -> str:
    k = e.kind
    if k == "const":
        return repr(e.value)
    if k == "var":
        return f"x{e.value}"
    if k == "sum":
        return "(" + " + ".join(_py(a, mod) for a in e.args) + ")"
    if k == "prod":
        return "(" + " * ".join(_py(a, mod) for a in e.args) + ")"
    if k == "quot":
        return f"({_py(e.args[0], mod)} / {_py(e.args[1], mod)})"
    if k == "neg":
        return f"(-{_py(e.args[0], mod)})"
    if k == "pow":
        r = e.value
        b = _py(e.args[0], mod)
        if r.denominator == 1:
            if r == 2:
                return f"({b} * {b})"
            return f"({b} ** {int(r)})"
        if r.denominator % 2 == 1:
            return f"_oddroot({b}, {float(r)!r})"
        return f"({b} ** {float(r)!r})"
    return f"{mod}.{k}({_py(e.args[0], mod)})"


def _oddroot_np(b, r):
    return np.sign(b) * np.abs(b) ** r


def _oddroot_math(b, r):
    return math.copysign(abs(b) ** r, b)


def lambdify(exprs: Expr | Sequence[Expr], nvars: int, backend: str = "numpy") -> Callable:
    """Compile expressions into a function ``f(x1, ..., xn)``.

    A single expression yields a scalar/array result; a sequence yields a
    list. With the numpy backend domain violations show up as ``nan``/``inf``;
    the ``math`` backend works on floats only and raises ``ValueError``,
    ``ZeroDivisionError`` or ``OverflowError`` instead.
    """
    single = isinstance(exprs, Expr)
    items = [exprs] if single else list(exprs)
    args = ", ".join(f"x{i}" for i in range(1, nvars + 1))
    mod = "np" if backend == "numpy" else "math"
    body = ", ".join(_py(e, mod) for e in items)
    src = f"def _f({args}):\n    return {body if single else '[' + body + ']'}\n"
    ns = {"np": np, "math": math, "_oddroot": _oddroot_np if backend == "numpy" else _oddroot_math}
    exec(compile(src, "<lambdify>", "exec"), ns)
    return ns["_f"]


# ---------------------------------------------------------------------------
# differentiation


def _sum(terms: Iterable[Expr]) -> Expr:
    ts = [t for t in terms if not is_const(t, 0.0)]
    if not ts:
        return ZERO
    return ts[0] if len(ts) == 1 else Expr("sum", tuple(ts))


def _prod(factors: Iterable[Expr]) -> Expr:
    fs = []
    for f in factors:
        if is_const(f, 0.0):
            return ZERO
        if not is_const(f, 1.0):
            fs.append(f)
    if not fs:
        return ONE
    return fs[0] if len(fs) == 1 else Expr("prod", tuple(fs))


def _neg(e: Expr) -> Expr:
    if e.kind == "const":
        return const(-e.value)
    if e.kind == "neg":
        return e.args[0]
    return Expr("neg", (e,))


def diff(e: Expr, k: int) -> Expr:
    """Exact symbolic partial derivative with respect to ``x_k``."""
    if k < 1:
        raise ValueError("variable indices start at 1")
    return simplify(_diff(e, k))


def _diff(e: Expr, k: int) -> Expr:
    kind = e.kind
    if kind == "const":
        return ZERO
    if kind == "var":
        return ONE if e.value == k else ZERO
    if k not in variables(e):
        return ZERO
    if kind == "sum":
        return _sum(_diff(a, k) for a in e.args)
    if kind == "neg":
        d = _diff(e.args[0], k)
        return ZERO if is_const(d, 0.0) else _neg(d)
    if kind == "prod":
        terms = []
        for j, a in enumerate(e.args):
            d = _diff(a, k)
            if is_const(d, 0.0):
                continue
            terms.append(_prod(e.args[:j] + (d,) + e.args[j + 1:]))
        return _sum(terms)
    if kind == "quot":
        a, b = e.args
        da, db = _diff(a, k), _diff(b, k)
        num = _sum([_prod([da, b]), _neg(_prod([a, db])) if not is_const(db, 0.0) else ZERO])
        return Expr("quot", (num, Expr("pow", (b,), Fraction(2))))
    u = e.args[0]
    du = _diff(u, k)
    if kind == "pow":
        r = e.value
        inner = ONE if r == 1 else (u if r == 2 else Expr("pow", (u,), r - 1))
        return _prod([const(float(r)), inner, du])
    if kind == "sin":
        return _prod([Expr("cos", (u,)), du])
    if kind == "cos":
        return _neg(_prod([Expr("sin", (u,)), du]))
    if kind == "exp":
        return _prod([e, du])
    if kind == "log":
        return Expr("quot", (du, u))
    raise ValueError(f"unknown node kind {kind!r}")


def gradient(e: Expr, n: int) -> list[Expr]:
    return [diff(e, k) for k in range(1, n + 1)]


# ---------------------------------------------------------------------------
# simplification


def _key(e: Expr) -> str:
    return to_text(e)


def _split_coeff(t: Expr) -> tuple[float, list[Expr]]:
    """Split a term into (numeric coefficient, non-constant factors)."""
    if t.kind == "const":
        return t.value, []
    if t.kind == "neg":
        c, fs = _split_coeff(t.args[0])
        return -c, fs
    if t.kind == "prod":
        c = 1.0
        fs = []
        for a in t.args:
            ca, fa = _split_coeff(a)
            c *= ca
            fs.extend(fa)
        return c, fs
    return 1.0, [t]


def _build_term(c: float, fs: list[Expr]) -> Expr:
    if not fs:
        return const(c)
    body = fs[0] if len(fs) == 1 else Expr("prod", tuple(fs))
    if c == 1.0:
        return body
    if c == -1.0:
        return Expr("neg", (body,))
    return Expr("prod", (const(c),) + tuple(fs))


def _simplify_sum(args: tuple) -> Expr:
    flat = []
    for a in args:
        if a.kind == "sum":
            flat.extend(a.args)
        elif a.kind == "neg" and a.args[0].kind == "sum":
            flat.extend(_neg(b) for b in a.args[0].args)
        else:
            flat.append(a)
    order: list[tuple] = []
    groups: dict[tuple, list] = {}
    constant = 0.0
    for t in flat:
        c, fs = _split_coeff(t)
        if not fs:
            constant += c
            continue
        key = tuple(sorted(_key(f) for f in fs))
        if key in groups:
            groups[key][0] += c
        else:
            groups[key] = [c, fs]
            order.append(key)
    terms = []
    for key in order:
        c, fs = groups[key]
        if c != 0.0:
            terms.append(_build_term(c, fs))
    if constant != 0.0:
        terms.append(const(constant))
    if not terms:
        return ZERO
    return terms[0] if len(terms) == 1 else Expr("sum", tuple(terms))


def _simplify_prod(args: tuple) -> Expr:
    c = 1.0
    bases: dict[str, list] = {}
    order: list[str] = []
    others: list[tuple[str, Expr]] = []
    stack = list(args)
    flat = []
    while stack:
        a = stack.pop(0)
        if a.kind == "prod":
            stack[0:0] = list(a.args)
        elif a.kind == "neg":
            c = -c
            stack.insert(0, a.args[0])
        else:
            flat.append(a)
    for a in flat:
        if a.kind == "const":
            c *= a.value
            continue
        if a.kind == "pow" and a.value.denominator == 1:
            base, r = a.args[0], a.value
        else:
            base, r = a, Fraction(1)
        if r.denominator == 1:
            k = _key(base)
            if k in bases:
                bases[k][1] += r
            else:
                bases[k] = [base, r]
                order.append(k)
                others.append((k, None))
        else:
            others.append(("", a))
    if c == 0.0:
        return ZERO
    fs = []
    for k, a in others:
        if a is not None:
            fs.append(a)
            continue
        base, r = bases[k]
        if r == 0:
            continue
        fs.append(base if r == 1 else Expr("pow", (base,), r))
    return _build_term(c, fs)


def _fold(kind: str, v: float):
    try:
        return const(evaluate(Expr(kind, (const(v),)), ()))
    except (EvaluationError, ValueError):
        return None


def _simplify_once(e: Expr) -> Expr:
    k = e.kind
    if k in ("const", "var"):
        return e
    args = tuple(_simplify_once(a) for a in e.args)
    if k == "sum":
        return _simplify_sum(args)
    if k == "prod":
        return _simplify_prod(args)
    if k == "neg":
        a = args[0]
        if a.kind == "const":
            return const(-a.value)
        if a.kind == "neg":
            return a.args[0]
        if a.kind == "prod" and a.args[0].kind == "const":
            return _simplify_prod((const(-1.0),) + a.args)
        return Expr("neg", (a,))
    if k == "quot":
        a, b = args
        if is_const(a, 0.0):
            return ZERO
        if b.kind == "const" and b.value != 0.0:
            return _simplify_prod((const(1.0 / b.value), a))
        if a.kind == "const" and b.kind == "const":
            return Expr("quot", (a, b))
        return Expr("quot", (a, b))
    if k == "pow":
        a = args[0]
        r = e.value
        if r == 0:
            return ONE
        if r == 1:
            return a
        if a.kind == "const":
            try:
                return const(_rpow(a.value, r))
            except (EvaluationError, OverflowError, ValueError):
                return Expr("pow", (a,), r)
        if a.kind == "pow" and a.value.denominator == 1 and r.denominator == 1:
            return Expr("pow", a.args, a.value * r)
        return Expr("pow", (a,), r)
    a = args[0]
    if a.kind == "const":
        folded = _fold(k, a.value)
        if folded is not None:
            return folded
    return Expr(k, (a,))


def simplify(e: Expr) -> Expr:
    """Conservative simplification iterated to a fixed point.

    Folds constants, removes neutral elements, flattens sums/products and
    merges like terms and like integer-power factors.
    """
    for _ in range(50):
        nxt = _simplify_once(e)
        if nxt == e:
            return e
        e = nxt
    return e
