"""Real arithmetic expressions: parsing, evaluation, differentiation, folding.

Every coefficient the library assembles (defining functions, metric entries,
Euler-Lagrange right-hand sides) is an :class:`Expression` tree.  Trees are
immutable; constants are stored as exact :class:`fractions.Fraction` values so
that polynomial bookkeeping (see :func:`expand`, :func:`poly_coeffs`) stays
exact.

Grammar::

    expr     := term (('+'|'-') term)*
    term     := factor (('*'|'/') factor)*
    factor   := base ('^' exponent)?
    base     := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base
    exponent := integer | '(' signed rational ')'

Unary minus binds tighter than ``^``: ``-x^2`` parses as ``(-x)^2``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

FUNCTIONS = ("exp", "ln", "sqrt", "sin", "cos", "sinh", "cosh", "tanh")

_MATH = {
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
}


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UndeclaredIdentifier(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"undeclared identifier {name!r}", offset)
        self.name = name


class MalformedExponent(ParseError):
    pass


class DomainError(ExprError):
    def __init__(self, message: str, node: "Expression"):
        super().__init__(f"{message} in {node}")
        self.node = node


class UnboundVariable(ExprError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


class Expression:
    """Base node.  Subclasses are frozen dataclasses."""

    __slots__ = ()

    # arithmetic sugar for programmatic construction
    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, exponent):
        return Pow(self, Fraction(exponent))

    def __str__(self) -> str:
        return to_string(self)

    def eval(self, env: Mapping[str, float]) -> float:
        return evaluate(self, env)

    def diff(self, var: str) -> "Expression":
        return diff(self, var)

    def simplify(self) -> "Expression":
        return simplify(self)

    def variables(self) -> set[str]:
        return free_variables(self)


@dataclass(frozen=True, slots=True, eq=True)
class Const(Expression):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True, slots=True, eq=True)
class Var(Expression):
    name: str


@dataclass(frozen=True, slots=True, eq=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True, slots=True, eq=True)
class Add(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True, eq=True)
class Sub(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True, eq=True)
class Mul(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True, eq=True)
class Div(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True, eq=True)
class Pow(Expression):
    base: Expression
    exponent: Fraction

    def __post_init__(self):
        if not isinstance(self.exponent, Fraction):
            object.__setattr__(self, "exponent", Fraction(self.exponent))


@dataclass(frozen=True, slots=True, eq=True)
class Call(Expression):
    fn: str
    arg: Expression

    def __post_init__(self):
        if self.fn not in FUNCTIONS:
            raise ExprError(f"unknown function {self.fn!r}")


BINARY = {Add: "+", Sub: "-", Mul: "*", Div: "/"}
ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def as_expr(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, Fraction)):
        return Const(Fraction(value))
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ExprError(f"non-finite constant {value}")
        return Const(Fraction(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expression")


def const(value) -> Const:
    return Const(Fraction(value))


def var(name: str) -> Var:
    return Var(name)


def call(fn: str, arg) -> Call:
    return Call(fn, as_expr(arg))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: Sequence[str]):
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = set(variables)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, value, pos = self.take()
        if value != text or kind == "end":
            what = "end of input" if kind == "end" else repr(value)
            raise ParseError(f"expected {text!r}, found {what}", pos)

    def parse(self) -> Expression:
        e = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {value!r}", pos)
        return e

    def expr(self) -> Expression:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expression:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def factor(self) -> Expression:
        e = self.base()
        if self.peek()[1] == "^":
            self.take()
            e = Pow(e, self.exponent())
        return e

    def exponent(self) -> Fraction:
        kind, value, pos = self.take()
        if kind == "number":
            if not value.isdigit():
                raise MalformedExponent("exponent must be an integer or (p/q)", pos)
            return Fraction(int(value))
        if value != "(":
            raise MalformedExponent("exponent must be an integer or (p/q)", pos)
        sign = 1
        kind, value, pos = self.take()
        if value in ("+", "-"):
            sign = -1 if value == "-" else 1
            kind, value, pos = self.take()
        if kind != "number" or not value.isdigit():
            raise MalformedExponent("expected integer in rational exponent", pos)
        num = int(value)
        den = 1
        if self.peek()[1] == "/":
            self.take()
            kind, value, pos = self.take()
            if kind != "number" or not value.isdigit() or int(value) == 0:
                raise MalformedExponent("expected nonzero integer denominator", pos)
            den = int(value)
        kind, value, pos = self.take()
        if value != ")":
            raise MalformedExponent("expected ')' closing the exponent", pos)
        return Fraction(sign * num, den)

    def base(self) -> Expression:
        kind, value, pos = self.take()
        if kind == "number":
            return Const(Fraction(value))
        if kind == "ident":
            if self.peek()[1] == "(":
                if value not in FUNCTIONS:
                    raise UndeclaredIdentifier(value, pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            if value not in self.variables:
                raise UndeclaredIdentifier(value, pos)
            return Var(value)
        if value == "(" and kind == "op":
            e = self.expr()
            self.expect(")")
            return e
        if value == "-" and kind == "op":
            return Neg(self.base())
        what = "end of input" if kind == "end" else repr(value)
        raise ParseError(f"unexpected {what}", pos)


def parse(source: str, variables: Sequence[str]) -> Expression:
    """Parse ``source`` over the declared ordered variable list."""
    return _Parser(source, variables).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2}


def _fmt_const(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    # exact decimal when the denominator is 2^a 5^b, else a quotient
    d = c.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1:
        digits = 0
        q = c.denominator
        while q != 1:
            q = q // 2 if q % 2 == 0 else q // 5
            digits += 1
        s = f"{abs(c.numerator) * (10**digits // c.denominator)}"
        s = s.rjust(digits + 1, "0")
        s = s[:-digits] + "." + s[-digits:]
        return ("-" if c < 0 else "") + s
    return f"({c.numerator}/{c.denominator})"


def _fmt_exponent(r: Fraction) -> str:
    if r.denominator == 1 and r >= 0:
        return str(r.numerator)
    if r.denominator == 1:
        return f"({r.numerator})"
    return f"({r.numerator}/{r.denominator})"


def _atomic(e: Expression) -> str:
    """Render ``e`` so that it parses back as a single ``base``."""
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_string(e.arg)})"
    if isinstance(e, Const) and e.value >= 0 and e.value.denominator in (1, 2, 4, 5, 8, 10, 16, 20, 25, 50, 100):
        return _fmt_const(e.value)
    if isinstance(e, Neg):
        return "-" + _atomic(e.arg)
    return f"({to_string(e)})"


def to_string(e: Expression) -> str:
    if isinstance(e, Const):
        s = _fmt_const(e.value)
        return s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_string(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _atomic(e.arg)
    if isinstance(e, Pow):
        return f"{_atomic(e.base)}^{_fmt_exponent(e.exponent)}"
    prec = _PREC[type(e)]
    left = to_string(e.left)
    if type(e.left) in _PREC and _PREC[type(e.left)] < prec:
        left = f"({left})"
    right = to_string(e.right)
    # left-associative grammar: same-precedence right operands need parens
    if type(e.right) in _PREC and _PREC[type(e.right)] <= prec:
        right = f"({right})"
    return f"{left} {BINARY[type(e)]} {right}"


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(e: Expression, env: Mapping[str, float]) -> float:
    """Recursive IEEE double evaluation; raises :class:`DomainError`."""
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Add):
        return evaluate(e.left, env) + evaluate(e.right, env)
    if isinstance(e, Sub):
        return evaluate(e.left, env) - evaluate(e.right, env)
    if isinstance(e, Mul):
        return evaluate(e.left, env) * evaluate(e.right, env)
    if isinstance(e, Div):
        den = evaluate(e.right, env)
        if den == 0.0:
            raise DomainError("division by zero", e)
        return evaluate(e.left, env) / den
    if isinstance(e, Pow):
        b = evaluate(e.base, env)
        r = e.exponent
        if r.denominator == 1:
            if b == 0.0 and r < 0:
                raise DomainError("zero to a negative power", e)
            return b ** int(r)
        if b < 0.0 or (b == 0.0 and r < 0):
            raise DomainError("fractional power of a non-positive number", e)
        return b ** float(r)
    if isinstance(e, Call):
        a = evaluate(e.arg, env)
        if e.fn == "ln" and a <= 0.0:
            raise DomainError("logarithm of a non-positive number", e)
        if e.fn == "sqrt" and a < 0.0:
            raise DomainError("square root of a negative number", e)
        try:
            return _MATH[e.fn](a)
        except OverflowError:
            raise DomainError("overflow", e) from None
    raise TypeError(f"not an expression: {e!r}")


def free_variables(e: Expression) -> set[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, (Neg, Call)):
            stack.append(n.arg)
        elif isinstance(n, Pow):
            stack.append(n.base)
        elif isinstance(n, (Add, Sub, Mul, Div)):
            stack.extend((n.left, n.right))
    return out


def size(e: Expression) -> int:
    if isinstance(e, (Const, Var)):
        return 1
    if isinstance(e, (Neg, Call)):
        return 1 + size(e.arg)
    if isinstance(e, Pow):
        return 1 + size(e.base)
    return 1 + size(e.left) + size(e.right)


# ---------------------------------------------------------------------------
# Differentiation and folding
# ---------------------------------------------------------------------------


def _d(e: Expression, v: str) -> Expression:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if isinstance(e, Neg):
        return Neg(_d(e.arg, v))
    if isinstance(e, Add):
        return Add(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Sub):
        return Sub(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Mul):
        return Add(Mul(_d(e.left, v), e.right), Mul(e.left, _d(e.right, v)))
    if isinstance(e, Div):
        num = Sub(Mul(_d(e.left, v), e.right), Mul(e.left, _d(e.right, v)))
        return Div(num, Pow(e.right, Fraction(2)))
    if isinstance(e, Pow):
        r = e.exponent
        return Mul(Mul(Const(r), Pow(e.base, r - 1)), _d(e.base, v))
    if isinstance(e, Call):
        u, du = e.arg, _d(e.arg, v)
        if e.fn == "exp":
            outer = e
        elif e.fn == "ln":
            outer = Div(ONE, u)
        elif e.fn == "sqrt":
            outer = Div(ONE, Mul(Const(Fraction(2)), e))
        elif e.fn == "sin":
            outer = Call("cos", u)
        elif e.fn == "cos":
            outer = Neg(Call("sin", u))
        elif e.fn == "sinh":
            outer = Call("cosh", u)
        elif e.fn == "cosh":
            outer = Call("sinh", u)
        else:  # tanh
            outer = Sub(ONE, Pow(e, Fraction(2)))
        return Mul(outer, du)
    raise TypeError(f"not an expression: {e!r}")


def diff(e: Expression, var: str) -> Expression:
    """Exact partial derivative with respect to ``var``, constant-folded."""
    return simplify(_d(e, var))


_FOLD_AT_ZERO = {"exp": 1, "sin": 0, "sinh": 0, "tanh": 0, "cos": 1, "cosh": 1}


def _is(e: Expression, value) -> bool:
    return isinstance(e, Const) and e.value == value


def simplify(e: Expression) -> Expression:
    """Constant folding plus 0/1 identities.  Never folds transcendentals
    except at their exact rational special values (``exp(0) = 1`` etc.)."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Neg):
        a = simplify(e.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, Call):
        a = simplify(e.arg)
        if isinstance(a, Const):
            if a.value == 0 and e.fn in _FOLD_AT_ZERO:
                return Const(Fraction(_FOLD_AT_ZERO[e.fn]))
            if e.fn == "ln" and a.value == 1:
                return ZERO
        return Call(e.fn, a)
    if isinstance(e, Pow):
        b = simplify(e.base)
        r = e.exponent
        if r == 0:
            return ONE
        if r == 1:
            return b
        if isinstance(b, Const) and r.denominator == 1 and not (b.value == 0 and r < 0):
            return Const(b.value ** int(r))
        if isinstance(b, Pow) and r.denominator == 1 and b.exponent.denominator == 1:
            return simplify(Pow(b.base, b.exponent * r))
        return Pow(b, r)
    left = simplify(e.left)
    right = simplify(e.right)
    lc = left.value if isinstance(left, Const) else None
    rc = right.value if isinstance(right, Const) else None
    if isinstance(e, Add):
        if lc is not None and rc is not None:
            return Const(lc + rc)
        if lc == 0:
            return right
        if rc == 0:
            return left
        if isinstance(right, Neg):
            return Sub(left, right.arg)
        if rc is not None and rc < 0:
            return Sub(left, Const(-rc))
        return Add(left, right)
    if isinstance(e, Sub):
        if lc is not None and rc is not None:
            return Const(lc - rc)
        if rc == 0:
            return left
        if lc == 0:
            return simplify(Neg(right))
        if isinstance(right, Neg):
            return Add(left, right.arg)
        if left == right:
            return ZERO
        return Sub(left, right)
    if isinstance(e, Mul):
        if lc is not None and rc is not None:
            return Const(lc * rc)
        if lc == 0 or rc == 0:
            return ZERO
        if lc == 1:
            return right
        if rc == 1:
            return left
        if lc == -1:
            return simplify(Neg(right))
        if rc == -1:
            return simplify(Neg(left))
        if rc is not None:
            left, right, lc, rc = right, left, rc, lc
        if lc is not None and isinstance(right, Mul) and isinstance(right.left, Const):
            return simplify(Mul(Const(lc * right.left.value), right.right))
        if isinstance(left, Neg) and isinstance(right, Neg):
            return simplify(Mul(left.arg, right.arg))
        if isinstance(left, Neg):
            return Neg(simplify(Mul(left.arg, right)))
        if isinstance(right, Neg):
            return Neg(simplify(Mul(left, right.arg)))
        return Mul(left, right)
    if isinstance(e, Div):
        if rc == 1:
            return left
        if lc == 0 and rc != 0:
            return ZERO
        if lc is not None and rc is not None and rc != 0:
            return Const(lc / rc)
        if rc is not None and rc != 0:
            return simplify(Mul(Const(1 / rc), left))
        if left == right:
            return ONE
        return Div(left, right)
    raise TypeError(f"not an expression: {e!r}")


def substitute(e: Expression, mapping: Mapping[str, Expression]) -> Expression:
    """Replace variables by expressions."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, Call):
        return Call(e.fn, substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exponent)
    return type(e)(substitute(e.left, mapping), substitute(e.right, mapping))


def total(terms: Iterable) -> Expression:
    """Sum of expressions (``0`` for an empty iterable), folded."""
    acc: Expression = ZERO
    for t in terms:
        acc = Add(acc, as_expr(t))
    return simplify(acc)


# ---------------------------------------------------------------------------
# Canonical polynomial form over atoms
# ---------------------------------------------------------------------------
#
# Monomials are sorted tuples of (atom key, integer exponent); atoms are
# variables or opaque non-polynomial subtrees (calls, fractional powers,
# reciprocals of sums).  Exponents may be negative only for atoms that are
# not sums.  The form is canonical for polynomial and Laurent expressions and
# a sound (never false-positive) zero test for everything else.

Monomial = tuple


class Poly:
    __slots__ = ("terms", "atoms")

    def __init__(self, terms=None, atoms=None):
        self.terms: dict[Monomial, Fraction] = terms or {}
        self.atoms: dict[str, Expression] = atoms or {}

    @classmethod
    def constant(cls, c: Fraction) -> "Poly":
        return cls({(): Fraction(c)} if c != 0 else {})

    @classmethod
    def atom(cls, key: str, node: Expression, power: int = 1) -> "Poly":
        return cls({((key, power),): Fraction(1)}, {key: node})

    def is_zero(self) -> bool:
        return not self.terms

    def const_value(self):
        if not self.terms:
            return Fraction(0)
        if list(self.terms) == [()]:
            return self.terms[()]
        return None

    def _merged_atoms(self, other):
        atoms = dict(self.atoms)
        atoms.update(other.atoms)
        return atoms

    def __add__(self, other: "Poly") -> "Poly":
        terms = dict(self.terms)
        for m, c in other.terms.items():
            v = terms.get(m, 0) + c
            if v == 0:
                terms.pop(m, None)
            else:
                terms[m] = v
        return Poly(terms, self._merged_atoms(other))

    def scale(self, c: Fraction) -> "Poly":
        if c == 0:
            return Poly()
        return Poly({m: v * c for m, v in self.terms.items()}, dict(self.atoms))

    def __neg__(self):
        return self.scale(Fraction(-1))

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other: "Poly") -> "Poly":
        terms: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                v = terms.get(m, 0) + c1 * c2
                if v == 0:
                    terms.pop(m, None)
                else:
                    terms[m] = v
        return Poly(terms, self._merged_atoms(other))

    def power(self, k: int) -> "Poly":
        out = Poly.constant(Fraction(1))
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def single_monomial(self):
        if len(self.terms) == 1:
            ((m, c),) = self.terms.items()
            return m, c
        return None

    def key(self) -> str:
        parts = []
        for m in sorted(self.terms):
            c = self.terms[m]
            parts.append(f"{c}" + "".join(f"*{a}^{k}" for a, k in m))
        return "+".join(parts) if parts else "0"

    def to_expression(self) -> Expression:
        acc: Expression = ZERO
        for m in sorted(self.terms):
            c = self.terms[m]
            t: Expression = Const(c)
            for a, k in m:
                node = self.atoms[a]
                t = Mul(t, node if k == 1 else Pow(node, Fraction(k)))
            acc = Add(acc, t)
        return simplify(acc)


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    d = dict(m1)
    for a, k in m2:
        v = d.get(a, 0) + k
        if v == 0:
            d.pop(a, None)
        else:
            d[a] = v
    return tuple(sorted(d.items()))


def _invert(p: Poly, node: Expression) -> Poly:
    sm = p.single_monomial()
    if sm is not None:
        m, c = sm
        inv = Poly({tuple((a, -k) for a, k in m): 1 / c}, dict(p.atoms))
        return inv
    key = f"inv[{p.key()}]"
    return Poly.atom(key, Pow(p.to_expression(), Fraction(-1)))


def expand(e: Expression) -> Poly:
    """Canonical polynomial form of ``e`` over variables and opaque atoms."""
    if isinstance(e, Const):
        return Poly.constant(e.value)
    if isinstance(e, Var):
        return Poly.atom(e.name, e)
    if isinstance(e, Neg):
        return -expand(e.arg)
    if isinstance(e, Add):
        return expand(e.left) + expand(e.right)
    if isinstance(e, Sub):
        return expand(e.left) - expand(e.right)
    if isinstance(e, Mul):
        return expand(e.left) * expand(e.right)
    if isinstance(e, Div):
        den = expand(e.right)
        c = den.const_value()
        if c is not None and c != 0:
            return expand(e.left).scale(1 / c)
        return expand(e.left) * _invert(den, e.right)
    if isinstance(e, Pow):
        b = expand(e.base)
        r = e.exponent
        if r.denominator == 1:
            k = int(r)
            if k >= 0:
                return b.power(k)
            return _invert(b, e.base).power(-k)
        inner = b.to_expression()
        return Poly.atom(f"pow[{b.key()},{r}]", Pow(inner, r))
    if isinstance(e, Call):
        a = expand(e.arg)
        inner = a.to_expression()
        c = a.const_value()
        if c == 0 and e.fn in _FOLD_AT_ZERO:
            return Poly.constant(Fraction(_FOLD_AT_ZERO[e.fn]))
        return Poly.atom(f"{e.fn}[{a.key()}]", Call(e.fn, inner))
    raise TypeError(f"not an expression: {e!r}")


def is_zero(e: Expression) -> bool:
    """Sound symbolic zero test (``True`` means provably zero)."""
    return expand(e).is_zero()


def equal(a: Expression, b: Expression) -> bool:
    return is_zero(Sub(a, b))


class NotPolynomial(ExprError):
    pass


def poly_coeffs(e: Expression, in_vars: Sequence[str]) -> dict[tuple, Expression]:
    """Coefficients of ``e`` as a polynomial in ``in_vars``.

    Keys are exponent tuples aligned with ``in_vars``; values are expressions
    free of ``in_vars``.  Raises :class:`NotPolynomial` when ``e`` is not a
    polynomial in those variables.
    """
    names = list(in_vars)
    p = expand(e)
    grouped: dict[tuple, Poly] = {}
    for m, c in p.terms.items():
        exps = [0] * len(names)
        rest = []
        for a, k in m:
            if a in names:
                if k < 0:
                    raise NotPolynomial(f"negative power of {a}")
                exps[names.index(a)] = k
            else:
                if free_variables(p.atoms[a]) & set(names):
                    raise NotPolynomial(f"{p.atoms[a]} is not polynomial in {names}")
                rest.append((a, k))
        key = tuple(exps)
        piece = Poly({tuple(rest): c}, p.atoms)
        grouped[key] = grouped[key] + piece if key in grouped else piece
    return {k: v.to_expression() for k, v in grouped.items() if not v.is_zero()}
