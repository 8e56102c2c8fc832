"""Shared test helpers: sympy oracle translation, random trees and structures."""

import math
from fractions import Fraction

import sympy as sp

from lcgeom import expr as E
from lcgeom.lc_core import LCStructure
from lcgeom.projective import ChristoffelField, base_names, trace_free_representative

SYMPY_FN = {
    "exp": sp.exp,
    "ln": sp.log,
    "sqrt": sp.sqrt,
    "sin": sp.sin,
    "cos": sp.cos,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
}


def to_sympy(e, symbols=None):
    """Independent translation of an expression tree into sympy."""
    symbols = symbols or {}

    def go(node):
        if isinstance(node, E.Const):
            return sp.Rational(node.value.numerator, node.value.denominator)
        if isinstance(node, E.Var):
            return symbols.setdefault(node.name, sp.Symbol(node.name))
        if isinstance(node, E.Neg):
            return -go(node.arg)
        if isinstance(node, E.Add):
            return go(node.left) + go(node.right)
        if isinstance(node, E.Sub):
            return go(node.left) - go(node.right)
        if isinstance(node, E.Mul):
            return go(node.left) * go(node.right)
        if isinstance(node, E.Div):
            return go(node.left) / go(node.right)
        if isinstance(node, E.Pow):
            r = node.exponent
            return go(node.base) ** sp.Rational(r.numerator, r.denominator)
        if isinstance(node, E.Call):
            return SYMPY_FN[node.fn](go(node.arg))
        raise TypeError(node)

    return go(e)


def sym(names):
    return {n: sp.Symbol(n) for n in names}


# ---------------------------------------------------------------------------
# random expression trees
# ---------------------------------------------------------------------------


def random_tree(rng, names, depth=3):
    """Random tree whose evaluation is safe on [-1, 1]^k (guarded domains)."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.6:
            return E.Var(names[int(rng.integers(len(names)))])
        return E.Const(Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5))))
    kind = rng.choice(["add", "sub", "mul", "div", "pow", "call", "neg"])
    a = random_tree(rng, names, depth - 1)
    if kind == "neg":
        return E.Neg(a)
    if kind == "call":
        fn = str(rng.choice(["exp", "sin", "cos", "tanh", "ln", "sqrt", "sinh", "cosh"]))
        if fn in ("ln", "sqrt"):
            # positive argument: 2 + a^2
            a = E.Add(E.Const(Fraction(2)), E.Pow(a, Fraction(2)))
        elif fn in ("exp", "sinh", "cosh"):
            a = E.Call("tanh", a)
        return E.Call(fn, a)
    if kind == "pow":
        k = int(rng.integers(0, 4))
        if rng.random() < 0.3:
            return E.Pow(E.Add(E.Const(Fraction(2)), E.Pow(a, Fraction(2))), Fraction(int(rng.integers(-3, 4)), 2))
        return E.Pow(a, Fraction(k))
    b = random_tree(rng, names, depth - 1)
    if kind == "div":
        b = E.Add(E.Const(Fraction(3)), E.Pow(b, Fraction(2)))
        return E.Div(a, b)
    return {"add": E.Add, "sub": E.Sub, "mul": E.Mul}[kind](a, b)


# ---------------------------------------------------------------------------
# structures
# ---------------------------------------------------------------------------


def random_structure_n1(rng, degree=3):
    atoms = ["1", "x1", "u", "sin(x1)", "cos(u)", "x1*u"]
    terms = []
    for k in range(degree + 1):
        c = rng.uniform(-0.3, 0.3)
        atom = atoms[int(rng.integers(len(atoms)))]
        terms.append(f"({c:.6f})*({atom})*p1^{k}")
    return LCStructure.scalar(" + ".join(terms))


E_ = math.e


def chain_p(x):
    """Closed-form chain of the worked example over the x-axis."""
    return (math.sqrt(math.exp(x + 1)) - math.sqrt(math.exp(x))) / (math.sqrt(E_) - math.sqrt(math.exp(x)))


def chain_p_dot(x):
    s = math.sqrt(math.exp(x))
    return (math.sqrt(E_) - 1) * math.sqrt(E_) * s / (2 * (math.sqrt(E_) - s) ** 2)


def random_polynomial(rng, names, terms=3):
    parts = []
    for _ in range(terms):
        mono = "*".join(f"{v}^{int(rng.integers(0, 3))}" for v in names)
        parts.append(f"({int(rng.integers(-4, 5))}/{int(rng.integers(1, 4))})*{mono}")
    return E.parse(" + ".join(parts), names)


def random_gamma(rng, m):
    names = base_names(m)
    raw = {}
    for c in range(m):
        for a in range(m):
            for b in range(a, m):
                raw[(c, a, b)] = random_polynomial(rng, names)
    return trace_free_representative(ChristoffelField(m, raw))


# acceptance lines, printed in the terminal summary
ACCEPTANCE = {}
