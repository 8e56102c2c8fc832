"""Homogeneous model: para-complex null lines in R^{n+2,n+2}, exactly.

A vector is stored as its eigencomponents (v_+, v_-) for the para-complex
structure.  V_+ and V_- are null and dual, so the inner product is
``<v, w> = v_+ . w_- + v_- . w_+``.  Points of the model are para-complex
null lines <v_+, v_-> with ``v_- . v_+ = 0``.  All arithmetic uses
:class:`fractions.Fraction`.

Tangent vectors at a line L are given by velocities (w_+, w_-) of the two
spanning vectors, taken modulo v_+ and v_- respectively.  In the adapted frame
of L (which maps the origin <e_0, e^{n+1}> to L) a tangent vector has blocks
(X, Y, z) with w_+ = X^i e_i + z e_{n+1} and w_- = -(Y_j e^j + z e^0).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

Vec = tuple


class ModelError(Exception):
    pass


class NotInN0(ModelError):
    pass


class NotTransverse(ModelError):
    pass


class NotNullGeneric(ModelError):
    pass


class IdenticalLines(ModelError):
    pass


def vec(values) -> Vec:
    return tuple(Fraction(v) for v in values)


def dot(a: Sequence, b: Sequence) -> Fraction:
    if len(a) != len(b):
        raise ModelError("dimension mismatch")
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def scale(c, a):
    return tuple(c * x for x in a)


def lincomb(*pairs):
    """sum of c * v over (c, v) pairs."""
    out = None
    for c, v in pairs:
        term = scale(Fraction(c), v)
        out = term if out is None else add(out, term)
    return out


def is_zero(a) -> bool:
    return all(x == 0 for x in a)


def unit(size: int, k: int) -> Vec:
    return tuple(Fraction(int(i == k)) for i in range(size))


def normalize(a) -> Vec:
    """Scale so that the first nonzero coordinate is 1."""
    for x in a:
        if x != 0:
            return tuple(y / x for y in a)
    raise ModelError("cannot normalise the zero vector")


def parallel(a, b) -> bool:
    if is_zero(a) or is_zero(b):
        return False
    return normalize(a) == normalize(b)


def rank(rows) -> int:
    """Exact rank of a list of rational row vectors."""
    M = [list(r) for r in rows]
    if not M:
        return 0
    r = 0
    cols = len(M[0])
    for c in range(cols):
        piv = next((k for k in range(r, len(M)) if M[k][c] != 0), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        for k in range(r + 1, len(M)):
            if M[k][c] != 0:
                f = M[k][c] / M[r][c]
                M[k] = [a - f * b for a, b in zip(M[k], M[r])]
        r += 1
        if r == len(M):
            break
    return r


def solve(A, b):
    """Solve the square rational system A x = b exactly."""
    n = len(A)
    M = [list(map(Fraction, row)) + [Fraction(b[i])] for i, row in enumerate(A)]
    for c in range(n):
        piv = next((k for k in range(c, n) if M[k][c] != 0), None)
        if piv is None:
            raise ModelError("singular system")
        M[c], M[piv] = M[piv], M[c]
        inv = 1 / M[c][c]
        M[c] = [v * inv for v in M[c]]
        for k in range(n):
            if k != c and M[k][c] != 0:
                f = M[k][c]
                M[k] = [a - f * bb for a, bb in zip(M[k], M[c])]
    return tuple(M[k][n] for k in range(n))


# ---------------------------------------------------------------------------
# Vectors and lines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PCVector:
    plus: Vec
    minus: Vec

    def __post_init__(self):
        object.__setattr__(self, "plus", vec(self.plus))
        object.__setattr__(self, "minus", vec(self.minus))
        if len(self.plus) != len(self.minus) or len(self.plus) < 3:
            raise ModelError("plus and minus parts must both have n+2 >= 3 entries")

    @property
    def n(self) -> int:
        return len(self.plus) - 2

    def K(self) -> "PCVector":
        return PCVector(self.plus, scale(-1, self.minus))

    def __add__(self, other):
        return PCVector(add(self.plus, other.plus), add(self.minus, other.minus))

    def __mul__(self, c):
        return PCVector(scale(Fraction(c), self.plus), scale(Fraction(c), self.minus))

    __rmul__ = __mul__


def inner_product(v: PCVector, w: PCVector) -> Fraction:
    if v.n != w.n:
        raise ModelError("dimension mismatch")
    return dot(v.plus, w.minus) + dot(v.minus, w.plus)


def basis_plus(n: int, k: int) -> PCVector:
    """e_k in V_+."""
    return PCVector(unit(n + 2, k), (0,) * (n + 2))


def basis_minus(n: int, k: int) -> PCVector:
    """e^k in V_-."""
    return PCVector((0,) * (n + 2), unit(n + 2, k))


@dataclass(frozen=True, eq=False)
class PCLine:
    v_plus: Vec
    v_minus: Vec

    def __post_init__(self):
        object.__setattr__(self, "v_plus", vec(self.v_plus))
        object.__setattr__(self, "v_minus", vec(self.v_minus))
        if len(self.v_plus) != len(self.v_minus) or len(self.v_plus) < 3:
            raise ModelError("spanning vectors must both have n+2 >= 3 entries")
        if is_zero(self.v_plus) or is_zero(self.v_minus):
            raise NotInN0("spanning vectors of a para-complex line must be nonzero")
        if dot(self.v_minus, self.v_plus) != 0:
            raise ModelError("line is not null: v_minus(v_plus) != 0")

    @property
    def n(self) -> int:
        return len(self.v_plus) - 2

    def canonical(self) -> tuple:
        return normalize(self.v_plus), normalize(self.v_minus)

    def __eq__(self, other):
        if not isinstance(other, PCLine):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())

    def residual(self) -> Fraction:
        return dot(self.v_minus, self.v_plus)

    def apply(self, g) -> "PCLine":
        """Image under a group element acting by g on V_+ and g^{-T} on V_-."""
        return PCLine(g.act_plus(self.v_plus), g.act_minus(self.v_minus))


def origin(n: int) -> PCLine:
    return PCLine(unit(n + 2, 0), unit(n + 2, n + 1))


def pc_hull(v: PCVector) -> PCLine:
    """Para-complex hull <v, K v> of a null vector with both parts nonzero."""
    if is_zero(v.plus) or is_zero(v.minus):
        raise NotInN0("vector lies in V_+ or V_-")
    if inner_product(v, v) != 0:
        raise NotInN0("vector is not null")
    return PCLine(v.plus, v.minus)


# ---------------------------------------------------------------------------
# Group elements and adapted frames
# ---------------------------------------------------------------------------


class GroupElement:
    """Invertible g on V_+, acting on V_- by the inverse transpose."""

    def __init__(self, matrix):
        self.m = [vec(row) for row in matrix]
        size = len(self.m)
        if any(len(r) != size for r in self.m):
            raise ModelError("group element must be square")
        if rank(self.m) != size:
            raise ModelError("group element must be invertible")
        self._inv = None

    @property
    def size(self):
        return len(self.m)

    def inverse_matrix(self):
        if self._inv is None:
            size = self.size
            cols = [solve(self.m, unit(size, k)) for k in range(size)]
            self._inv = [tuple(cols[c][r] for c in range(size)) for r in range(size)]
        return self._inv

    def act_plus(self, v) -> Vec:
        return tuple(dot(row, v) for row in self.m)

    def act_minus(self, a) -> Vec:
        inv = self.inverse_matrix()
        size = self.size
        # (g^{-T} a)_j = sum_i inv[i][j] a_i
        return tuple(sum((inv[i][j] * a[i] for i in range(size)), Fraction(0)) for j in range(size))

    def inv_plus(self, v) -> Vec:
        inv = self.inverse_matrix()
        return tuple(dot(row, v) for row in inv)

    def transpose_act(self, a) -> Vec:
        """g^T a, the inverse of act_minus."""
        size = self.size
        return tuple(sum((self.m[i][j] * a[i] for i in range(size)), Fraction(0)) for j in range(size))

    def determinant(self) -> Fraction:
        M = [list(r) for r in self.m]
        size = self.size
        det = Fraction(1)
        for c in range(size):
            piv = next((k for k in range(c, size) if M[k][c] != 0), None)
            if piv is None:
                return Fraction(0)
            if piv != c:
                M[c], M[piv] = M[piv], M[c]
                det = -det
            det *= M[c][c]
            for k in range(c + 1, size):
                f = M[k][c] / M[c][c]
                M[k] = [a - f * b for a, b in zip(M[k], M[c])]
        return det


def adapted_frame(L: PCLine) -> GroupElement:
    """Group element g with g e_0 = v_+ and g^{-T} e^{n+1} = v_-.

    Columns are v_+, n vectors completing v_+ to a basis of ker v_-, and a
    vector u with v_-(u) = 1.
    """
    size = L.n + 2
    vm = L.v_minus
    j0 = next(k for k, a in enumerate(vm) if a != 0)
    u = scale(1 / vm[j0], unit(size, j0))
    kernel = []
    for j in range(size):
        if j == j0:
            continue
        kernel.append(add(unit(size, j), scale(-vm[j] / vm[j0], unit(size, j0))))
    cols = [L.v_plus]
    for k in kernel:
        if len(cols) == size - 1:
            break
        if rank(cols + [k]) == len(cols) + 1:
            cols.append(k)
    cols.append(u)
    return GroupElement([tuple(cols[c][r] for c in range(size)) for r in range(size)])


# ---------------------------------------------------------------------------
# Tangent vectors
# ---------------------------------------------------------------------------

TANGENT_KINDS = ("zero", "in_E", "in_F", "null_generic", "contact_nonnull", "transverse")


@dataclass(frozen=True, eq=False)
class ModelTangent:
    base: PCLine
    X: Vec
    Y: Vec
    z: Fraction
    rep: tuple | None = None  # exact (w_+, w_-) when built from a velocity

    def __post_init__(self):
        object.__setattr__(self, "X", vec(self.X))
        object.__setattr__(self, "Y", vec(self.Y))
        object.__setattr__(self, "z", Fraction(self.z))
        n = self.base.n
        if len(self.X) != n or len(self.Y) != n:
            raise ModelError(f"X and Y must have {n} entries")

    @classmethod
    def at_origin(cls, n: int, X, Y, z) -> "ModelTangent":
        return cls(origin(n), X, Y, z)

    def velocity(self) -> tuple[Vec, Vec]:
        """(w_+, w_-) in the ambient coordinates."""
        if self.rep is not None:
            return self.rep
        g = adapted_frame(self.base)
        wp0 = (Fraction(0),) + self.X + (self.z,)
        wm0 = (-self.z,) + tuple(-y for y in self.Y) + (Fraction(0),)
        return g.act_plus(wp0), g.act_minus(wm0)

    @classmethod
    def from_velocity(cls, base: PCLine, w_plus, w_minus) -> "ModelTangent":
        w_plus, w_minus = vec(w_plus), vec(w_minus)
        n = base.n
        z1 = dot(base.v_minus, w_plus)
        z2 = -dot(w_minus, base.v_plus)
        if z1 != z2:
            raise ModelError("velocity does not preserve the null condition")
        g = adapted_frame(base)
        a = g.inv_plus(w_plus)
        b = g.transpose_act(w_minus)
        X = a[1 : n + 1]
        Y = tuple(-y for y in b[1 : n + 1])
        return cls(base, X, Y, z1, rep=(w_plus, w_minus))

    def transported(self, g: GroupElement) -> "ModelTangent":
        wp, wm = self.velocity()
        return ModelTangent.from_velocity(self.base.apply(g), g.act_plus(wp), g.act_minus(wm))

    @property
    def a(self) -> Fraction:
        """Y_i X^i, the Levi pairing of the E- and F-parts."""
        return dot(self.Y, self.X)


def classify_tangent(w: ModelTangent) -> str:
    if w.z != 0:
        return "transverse"
    xz, yz = is_zero(w.X), is_zero(w.Y)
    if xz and yz:
        return "zero"
    if w.a != 0:
        return "contact_nonnull"
    if yz:
        return "in_E"
    if xz:
        return "in_F"
    return "null_generic"


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModelCurve:
    kind: str
    func: Callable
    label: str = ""
    span: Vec = ()

    def at(self, t) -> PCLine:
        return self.func(Fraction(t))

    def sample(self, ts):
        out = []
        for t in ts:
            L = self.at(t)
            out.append((Fraction(t), L.v_plus, L.v_minus))
        return out

    def to_csv(self, ts, exact: bool = True) -> str:
        rows = self.sample(ts)
        size = len(rows[0][1]) if rows else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *(f"vp_{k}" for k in range(size)), *(f"vm_{k}" for k in range(size))])
        fmt = str if exact else (lambda q: repr(float(q)))
        for t, vp, vm in rows:
            w.writerow([fmt(t), *map(fmt, vp), *map(fmt, vm)])
        return buf.getvalue()


def model_chain(L: PCLine, w: ModelTangent) -> ModelCurve:
    """Chain through L in the non-degenerate para-complex plane L + im(w)."""
    if w.base != L:
        raise ModelError("tangent vector is not based at L")
    kind = classify_tangent(w)
    if kind != "transverse":
        raise NotTransverse(f"{kind}: chains need a transverse tangent vector")
    wp, wm = w.velocity()
    vp, vm = w.base.v_plus, w.base.v_minus
    z = dot(vm, wp)
    a = dot(wm, wp)

    def func(t):
        return PCLine(add(vp, scale(t, wp)), add(scale(z - t * a, vm), scale(t * z, wm)))

    return ModelCurve("chain", func, span=(vp, wp, vm, wm))


def model_null_chain(L: PCLine, w: ModelTangent, a=0, b=0, allow_degenerate: bool = False) -> ModelCurve:
    """t -> <(1 + a t) v_+ + t w_+, (1 + b t) v_- + t w_->."""
    if w.base != L:
        raise ModelError("tangent vector is not based at L")
    kind = classify_tangent(w)
    ok = ("null_generic", "in_E", "in_F") if allow_degenerate else ("null_generic",)
    if kind not in ok:
        raise NotNullGeneric(f"{kind}: null-chains need a generic null tangent vector")
    a, b = Fraction(a), Fraction(b)
    wp, wm = w.velocity()
    vp, vm = w.base.v_plus, w.base.v_minus

    def func(t):
        plus = add(scale(1 + a * t, vp), scale(t, wp))
        minus = add(scale(1 + b * t, vm), scale(t, wm))
        return PCLine(plus, minus)

    return ModelCurve("null_chain", func, label=f"a={a},b={b}", span=(vp, wp, vm, wm))


# ---------------------------------------------------------------------------
# Connectivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Connection:
    """Result of :func:`connect`.

    kind is 'chain', 'null_chain_family', 'degenerate' or 'none'.  For chains
    ``arcs`` holds the two arcs from L1 (s = 0) to L2 (s = 1); for null-chain
    families ``member(r)`` gives the member with slope ratio r.
    """

    kind: str
    L1: PCLine
    L2: PCLine
    detail: str = ""
    arcs: tuple = ()

    def member(self, r) -> ModelCurve:
        if self.kind != "null_chain_family":
            raise ModelError("not a null-chain family")
        r = Fraction(r)
        if r == 0:
            raise ModelError("slope ratio must be nonzero")
        p1, m1, p2, m2 = self.L1.v_plus, self.L1.v_minus, self.L2.v_plus, self.L2.v_minus

        def func(s):
            return PCLine(lincomb((1 - s, p1), (s, p2)), lincomb((1 - s, m1), (r * s, m2)))

        return ModelCurve("null_chain", func, label=f"r={r}")


def gram_restricted(L1: PCLine, L2: PCLine):
    """Gram matrix of the inner product on (v1+, v2+, v1-, v2-)."""
    vecs = [
        PCVector(L1.v_plus, (0,) * len(L1.v_plus)),
        PCVector(L2.v_plus, (0,) * len(L1.v_plus)),
        PCVector((0,) * len(L1.v_plus), L1.v_minus),
        PCVector((0,) * len(L1.v_plus), L2.v_minus),
    ]
    return [[inner_product(a, b) for b in vecs] for a in vecs]


def connect(L1: PCLine, L2: PCLine) -> Connection:
    if L1.n != L2.n:
        raise ModelError("dimension mismatch")
    same_plus = parallel(L1.v_plus, L2.v_plus)
    same_minus = parallel(L1.v_minus, L2.v_minus)
    if same_plus and same_minus:
        raise IdenticalLines("the two lines coincide")
    if same_minus:
        return Connection("degenerate", L1, L2, "E: common V_- component")
    if same_plus:
        return Connection("degenerate", L1, L2, "F: common V_+ component")
    c12 = dot(L1.v_minus, L2.v_plus)
    c21 = dot(L2.v_minus, L1.v_plus)
    if c12 != 0 and c21 != 0:
        p1, m1, p2, m2 = L1.v_plus, L1.v_minus, L2.v_plus, L2.v_minus
        arcs = []
        for sign, label in ((1, "arc+"), (-1, "arc-")):

            def func(s, sign=sign):
                return PCLine(lincomb((1 - s, p1), (sign * s, p2)), lincomb(((1 - s) * c21, m1), (-sign * s * c12, m2)))

            arcs.append(ModelCurve("chain", func, label=label))
        return Connection("chain", L1, L2, "non-degenerate para-complex plane", tuple(arcs))
    if c12 == 0 and c21 == 0:
        return Connection("null_chain_family", L1, L2, "null para-complex plane")
    return Connection("none", L1, L2, "degenerate plane: exactly one cross pairing vanishes")


def random_null_line(n: int, rng, bound: int = 5) -> PCLine:
    """Random null line with small integer entries (test and demo helper)."""
    size = n + 2
    while True:
        vp = tuple(Fraction(int(rng.integers(-bound, bound + 1))) for _ in range(size))
        if is_zero(vp):
            continue
        raw = tuple(Fraction(int(rng.integers(-bound, bound + 1))) for _ in range(size))
        k = next(i for i, a in enumerate(vp) if a != 0)
        # project raw onto the annihilator of vp
        vm = add(raw, scale(-dot(raw, vp) / vp[k], unit(size, k)))
        if not is_zero(vm):
            return PCLine(vp, vm)
