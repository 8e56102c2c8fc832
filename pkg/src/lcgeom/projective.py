"""Dictionary between projective structures and LC structures.

The base manifold has coordinates (x^1..x^n, u) with u = x^{n+1}; Christoffel
symbols are stored 0-based as ``gamma[c, a, b]`` so that index ``n`` is the
u-direction.  Files and reports use 1-based indices.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Mapping

import numpy as np

from . import expr as E
from . import kernels
from ._program import compile_programs
from .lc_core import LCStructure, coordinate_names


class ProjectiveError(Exception):
    pass


class NotProjective(ProjectiveError):
    pass


class ChristoffelError(ProjectiveError):
    pass


def base_names(m: int) -> list[str]:
    return [f"x{i + 1}" for i in range(m - 1)] + ["u"]


class ChristoffelField:
    """Symmetric Christoffel symbols over the base coordinates (x, u)."""

    def __init__(self, m: int, gamma: Mapping | None = None):
        if m < 2:
            raise ValueError("base dimension must be at least 2")
        self.m = m
        self.names = tuple(base_names(m))
        self._g: dict[tuple, E.Expression] = {}
        for (c, a, b), value in (gamma or {}).items():
            key = (c, min(a, b), max(a, b))
            if not all(0 <= k < m for k in key):
                raise ChristoffelError(f"index {(c, a, b)} out of range")
            e = E.simplify(E.as_expr(value))
            extra = e.variables() - set(self.names)
            if extra:
                raise E.UnboundVariable(sorted(extra)[0])
            if key in self._g and not E.equal(self._g[key], e):
                raise ChristoffelError(f"Gamma{key} given twice with different values (not symmetric)")
            self._g[key] = e

    def __getitem__(self, key) -> E.Expression:
        c, a, b = key
        return self._g.get((c, min(a, b), max(a, b)), E.ZERO)

    def evaluate(self, point) -> np.ndarray:
        """Numeric array G[c, a, b] at a base point."""
        if not hasattr(self, "_prog"):
            m = self.m
            exprs = [self[c, a, b] for c in range(m) for a in range(m) for b in range(m)]
            self._prog = compile_programs(exprs, self.names)
        vals, st = kernels.eval_programs(self._prog, np.asarray(point, dtype=float))
        if st:
            raise ProjectiveError("domain error evaluating Christoffel symbols")
        return vals.reshape(self.m, self.m, self.m)

    def items(self):
        return sorted(self._g.items())

    def trace(self, c: int) -> E.Expression:
        return E.total(self[a, a, c] for a in range(self.m))

    def is_trace_free(self) -> bool:
        return all(E.is_zero(self.trace(c)) for c in range(self.m))

    def check(self, require_trace_free: bool = True):
        if require_trace_free:
            for c in range(self.m):
                if not E.is_zero(self.trace(c)):
                    raise ChristoffelError(f"trace sum_a Gamma^a_(a,{c + 1}) = {self.trace(c)} is not zero")

    def equals(self, other: "ChristoffelField") -> bool:
        if self.m != other.m:
            return False
        keys = set(self._g) | set(other._g)
        return all(E.equal(self[k], other[k]) for k in keys)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "gamma": {f"{c + 1},{a + 1},{b + 1}": str(e) for (c, a, b), e in self.items() if e != E.ZERO},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChristoffelField":
        m = int(data["m"])
        names = base_names(m)
        gamma = {}
        for key, src in data.get("gamma", {}).items():
            c, a, b = (int(k) - 1 for k in key.split(","))
            gamma[(c, a, b)] = E.parse(src, names)
        return cls(m, gamma)

    def __repr__(self):
        return f"ChristoffelField(m={self.m}, {self.to_dict()['gamma']})"


# ---------------------------------------------------------------------------
# Gamma -> f
# ---------------------------------------------------------------------------


def fij_from_christoffels(gamma: ChristoffelField, check: bool = True) -> LCStructure:
    """Cubic defining functions of the LC structure induced by a projective class."""
    if check:
        gamma.check(require_trace_free=True)
    n = gamma.m - 1
    N = n
    p = [E.Var(f"p{i + 1}") for i in range(n)]
    G = gamma.__getitem__
    f = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            t = [E.Neg(G((N, i, j)))]
            for k in range(n):
                t.append(E.Mul(p[k], G((k, i, j))))
            t.append(E.Neg(E.Mul(p[j], G((N, N, i)))))
            t.append(E.Neg(E.Mul(p[i], G((N, N, j)))))
            for k in range(n):
                t.append(E.Mul(E.Mul(p[i], p[k]), G((k, N, j))))
                t.append(E.Mul(E.Mul(p[j], p[k]), G((k, N, i))))
            t.append(E.Neg(E.Mul(E.Mul(p[i], p[j]), G((N, N, N)))))
            for k in range(n):
                t.append(E.Mul(E.Mul(E.Mul(p[i], p[j]), p[k]), G((k, N, N))))
            f[i][j] = f[j][i] = E.expand(E.total(t)).to_expression()
    return LCStructure(n, f)


# ---------------------------------------------------------------------------
# f -> Gamma
# ---------------------------------------------------------------------------


def _unknowns(m: int):
    return [(c, a, b) for c in range(m) for a, b in combinations_with_replacement(range(m), 2)]


def _monomials(n: int):
    out = []
    for deg in range(4):
        for combo in combinations_with_replacement(range(n), deg):
            e = [0] * n
            for k in combo:
                e[k] += 1
            out.append(tuple(e))
    return out


@lru_cache(maxsize=None)
def _linear_system(m: int):
    """Exact coefficient matrix of Gamma -> (f_ij monomial coefficients, traces).

    Returns (rows, unknowns, solution_rows, consistency_rows) where each
    solution row expresses one unknown as a rational combination of the
    right-hand side and each consistency row must annihilate it.
    """
    n = m - 1
    unknowns = _unknowns(m)
    monos = _monomials(n)
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    rows = [("f", i, j, mono) for (i, j) in pairs for mono in monos] + [("trace", c) for c in range(m)]
    row_index = {r: k for k, r in enumerate(rows)}
    pvars = [f"p{i + 1}" for i in range(n)]
    A = [[Fraction(0)] * len(unknowns) for _ in rows]
    for col, key in enumerate(unknowns):
        unit = ChristoffelField(m, {key: 1})
        S = fij_from_christoffels(unit, check=False)
        for (i, j) in pairs:
            for mono, coeff in E.poly_coeffs(S.f[i][j], pvars).items():
                value = E.expand(coeff).const_value()
                A[row_index[("f", i, j, mono)]][col] = value
        c, a, b = key
        for t in range(m):
            # contribution of Gamma^c_ab to sum_a Gamma^a_{a t}
            if c == a and b == t:
                A[row_index[("trace", t)]][col] += 1
            if c == b and a == t and a != b:
                A[row_index[("trace", t)]][col] += 1
    # Gauss-Jordan on [A | I]
    R = len(rows)
    C = len(unknowns)
    M = [A[r][:] + [Fraction(int(r == k)) for k in range(R)] for r in range(R)]
    pivots = []
    r = 0
    for c in range(C):
        piv = next((k for k in range(r, R) if M[k][c] != 0), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        inv = 1 / M[r][c]
        M[r] = [v * inv for v in M[r]]
        for k in range(R):
            if k != r and M[k][c] != 0:
                fac = M[k][c]
                M[k] = [a_ - fac * b_ for a_, b_ in zip(M[k], M[r])]
        pivots.append(c)
        r += 1
    if len(pivots) != C:
        raise ProjectiveError(f"coefficient system is rank deficient for m={m}")
    solution = {pivots[k]: M[k][C:] for k in range(len(pivots))}
    consistency = [M[k][C:] for k in range(len(pivots), R)]
    return rows, unknowns, solution, consistency


def _combine(weights, rhs) -> E.Expression:
    terms = [E.Mul(E.Const(w), e) for w, e in zip(weights, rhs) if w != 0 and e != E.ZERO]
    return E.expand(E.total(terms)).to_expression()


def christoffels_from_fij(S: LCStructure) -> ChristoffelField:
    """Recover the trace-free Christoffel symbols; raises NotProjective."""
    n = S.n
    m = n + 1
    pvars = [f"p{i + 1}" for i in range(n)]
    coeffs = {}
    for i in range(n):
        for j in range(i, n):
            try:
                pc = E.poly_coeffs(S.f[i][j], pvars)
            except E.NotPolynomial as exc:
                raise NotProjective(f"f_{i + 1}{j + 1} is not polynomial in p: {exc}") from None
            for mono, c in pc.items():
                if sum(mono) > 3:
                    raise NotProjective(f"f_{i + 1}{j + 1} has p-degree {sum(mono)} > 3")
                coeffs[(i, j, mono)] = c
    rows, unknowns, solution, consistency = _linear_system(m)
    rhs = []
    for r in rows:
        rhs.append(coeffs.get((r[1], r[2], r[3]), E.ZERO) if r[0] == "f" else E.ZERO)
    for weights in consistency:
        if not E.is_zero(_combine(weights, rhs)):
            raise NotProjective("p-coefficients do not have the cubic pattern of a projective structure")
    gamma = {}
    for col, key in enumerate(unknowns):
        value = _combine(solution[col], rhs)
        if value != E.ZERO:
            gamma[key] = value
    result = ChristoffelField(m, gamma)
    back = fij_from_christoffels(result)
    for i in range(n):
        for j in range(n):
            if not E.equal(back.f[i][j], S.f[i][j]):
                raise NotProjective("reconstruction does not reproduce f")
    return result


def is_projective(S: LCStructure) -> bool:
    try:
        christoffels_from_fij(S)
    except NotProjective:
        return False
    return True


# ---------------------------------------------------------------------------
# Dimension two
# ---------------------------------------------------------------------------


def ode_coeffs_dim2(gamma: ChristoffelField):
    """(A0, A1, A2, A3) of the geodesic ODE y'' = A0 + A1 y' + A2 y'^2 + A3 y'^3."""
    if gamma.m != 2:
        raise ValueError("ODE coefficients need a two-dimensional base")
    G = gamma.__getitem__
    A0 = E.simplify(E.Neg(G((1, 0, 0))))
    A1 = E.simplify(E.Sub(G((0, 0, 0)), E.Mul(E.const(2), G((1, 0, 1)))))
    A2 = E.simplify(E.Sub(E.Mul(E.const(2), G((0, 0, 1))), G((1, 1, 1))))
    A3 = G((0, 1, 1))
    return A0, A1, A2, A3


def christoffels_from_ode_coeffs(A) -> ChristoffelField:
    """Inverse of :func:`ode_coeffs_dim2` on trace-free symbols."""
    A0, A1, A2, A3 = (E.as_expr(a) for a in A)
    third = E.const(Fraction(1, 3))
    return ChristoffelField(
        2,
        {
            (1, 0, 0): E.Neg(A0),
            (0, 0, 0): E.Mul(third, A1),
            (1, 0, 1): E.Neg(E.Mul(third, A1)),
            (0, 0, 1): E.Mul(third, A2),
            (1, 1, 1): E.Neg(E.Mul(third, A2)),
            (0, 1, 1): A3,
        },
    )


def structure_from_ode_coeffs(A) -> LCStructure:
    names = coordinate_names(1)
    A = [E.parse(a, names) if isinstance(a, str) else E.as_expr(a) for a in A]
    return fij_from_christoffels(christoffels_from_ode_coeffs(A))


# ---------------------------------------------------------------------------
# Projective changes
# ---------------------------------------------------------------------------


def projective_change(gamma: ChristoffelField, f) -> ChristoffelField:
    """Gamma^c_ab + delta^c_a Y_b + delta^c_b Y_a with Y = df (not renormalised)."""
    f = E.as_expr(f)
    m = gamma.m
    ups = [E.diff(f, name) for name in gamma.names]
    out = {}
    for c in range(m):
        for a in range(m):
            for b in range(a, m):
                t = [gamma[c, a, b]]
                if c == a:
                    t.append(ups[b])
                if c == b:
                    t.append(ups[a])
                out[(c, a, b)] = E.total(t)
    return ChristoffelField(m, out)


def trace_free_representative(gamma: ChristoffelField) -> ChristoffelField:
    """Subtract (delta^c_a tr_b + delta^c_b tr_a)/(m+1), tr_b = sum_a Gamma^a_ab."""
    m = gamma.m
    tr = [gamma.trace(b) for b in range(m)]
    w = E.const(Fraction(1, m + 1))
    out = {}
    for c in range(m):
        for a in range(m):
            for b in range(a, m):
                t = [gamma[c, a, b]]
                if c == a:
                    t.append(E.Neg(E.Mul(w, tr[b])))
                if c == b:
                    t.append(E.Neg(E.Mul(w, tr[a])))
                out[(c, a, b)] = E.expand(E.total(t)).to_expression()
    return ChristoffelField(m, out)


def geodesic_residual(gamma: ChristoffelField, point, vel, acc) -> float:
    """Unparametrised geodesic residual in the x^1 parametrisation.

    With r = c'' + Gamma(c', c'), returns max_a |r^a c'^1 - r^1 c'^a| / |c'^1|^3,
    which for m = 2 equals y'' - (A0 + A1 y' + A2 y'^2 + A3 y'^3).
    """
    m = gamma.m
    G = gamma.evaluate(point)
    v = np.asarray(vel, dtype=float)
    r = np.asarray(acc, dtype=float) + np.einsum("cab,a,b->c", G, v, v)
    worst = 0.0
    for a in range(1, m):
        worst = max(worst, abs(r[a] * v[0] - r[0] * v[a]))
    return worst / abs(v[0]) ** 3


# ---------------------------------------------------------------------------
# Patterson-Walker comparison
# ---------------------------------------------------------------------------


def pw_comparison(gamma: ChristoffelField, count: int = 100, seed: int = 0, radius: float = 0.8) -> dict:
    """Compare the Patterson-Walker pullback with the projective Fefferman metric.

    The pullback equals ``pw_conformal_factor * g_proj``; errors are reported
    after dividing by that factor, per branch.  For m = 2 the projective
    builder is also compared with the Fefferman metric of the induced f.
    """
    from .fefferman import build_fefferman, build_fefferman_projective, build_patterson_walker, pw_conformal_factor, pw_pullback

    g_pw = build_patterson_walker(gamma)
    g_proj = build_fefferman_projective(gamma)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-radius, radius, size=(count, g_proj.dim))
    out = {"m": gamma.m, "points": count, "seed": seed}
    for branch in (1, -1):
        worst = 0.0
        for q in pts:
            G = g_proj(q)
            P = pw_pullback(g_pw, q, branch) / pw_conformal_factor(q, branch)
            worst = max(worst, float(np.max(np.abs(P - G)) / max(1.0, np.max(np.abs(G)))))
        out[f"branch{'+' if branch > 0 else '-'}_max_error"] = worst
    if gamma.m == 2:
        g_lc = build_fefferman(fij_from_christoffels(gamma))
        out["integrable_vs_projective_max_error"] = max(
            float(np.max(np.abs(g_lc(q) - g_proj(q))) / max(1.0, np.max(np.abs(g_proj(q))))) for q in pts
        )
    return out
