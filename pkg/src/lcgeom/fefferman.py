"""Metric fields: the Fefferman metric of an integrable LC structure, the
Patterson-Walker metric of a projective class, and the projective Fefferman
metric, all with exact coefficient expressions.

The symmetric product is ``a . b = a (x) b + b (x) a``; a symmetric
coefficient sum ``c_ab dx^a . dx^b`` therefore has matrix entries ``2 c_ab``.
"""

from __future__ import annotations

import json
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from . import expr as E
from . import kernels
from ._program import compile_programs
from .lc_core import LCStructure, integrability_report


class MetricError(Exception):
    pass


class NotIntegrable(MetricError):
    pass


class TraceViolation(MetricError):
    pass


class MetricField:
    """A symmetric matrix of coefficient expressions over ordered coordinates."""

    def __init__(self, coords: Sequence[str], g):
        self.coords = tuple(coords)
        d = len(self.coords)
        rows = [[E.simplify(E.as_expr(v)) for v in row] for row in g]
        if len(rows) != d or any(len(r) != d for r in rows):
            raise MetricError(f"expected a {d}x{d} coefficient matrix")
        allowed = set(self.coords)
        for i in range(d):
            for j in range(d):
                extra = rows[i][j].variables() - allowed
                if extra:
                    raise E.UnboundVariable(sorted(extra)[0])
                if j > i and rows[i][j] != rows[j][i] and not E.equal(rows[i][j], rows[j][i]):
                    raise MetricError(f"coefficients ({i},{j}) and ({j},{i}) differ")
        for i in range(d):
            for j in range(i):
                rows[i][j] = rows[j][i]
        self.g = tuple(tuple(r) for r in rows)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, name: str) -> int:
        return self.coords.index(name)

    def entry(self, a: str, b: str) -> E.Expression:
        return self.g[self.index(a)][self.index(b)]

    @cached_property
    def dg_expressions(self):
        """dg[c][a][b] = d g_ab / d x^c."""
        d = self.dim
        out = []
        for c in range(d):
            name = self.coords[c]
            block = [[None] * d for _ in range(d)]
            for a in range(d):
                for b in range(a, d):
                    block[a][b] = block[b][a] = E.diff(self.g[a][b], name)
            out.append(block)
        return out

    @cached_property
    def programs(self):
        d = self.dim
        G = compile_programs([self.g[a][b] for a in range(d) for b in range(d)], self.coords)
        DG = compile_programs(
            [self.dg_expressions[c][a][b] for c in range(d) for a in range(d) for b in range(d)],
            self.coords,
        )
        return G, DG

    def __call__(self, point) -> np.ndarray:
        x = np.asarray(point, dtype=float)
        vals, st = kernels.eval_programs(self.programs[0], x)
        if st:
            raise MetricError(f"domain error evaluating the metric at {x.tolist()}")
        return vals.reshape(self.dim, self.dim)

    def derivatives(self, point) -> np.ndarray:
        x = np.asarray(point, dtype=float)
        vals, st = kernels.eval_programs(self.programs[1], x)
        if st:
            raise MetricError(f"domain error evaluating metric derivatives at {x.tolist()}")
        return vals.reshape(self.dim, self.dim, self.dim)

    def norm(self, point, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self(point) @ v)

    def pair(self, point, v, w) -> float:
        return float(np.asarray(v, dtype=float) @ self(point) @ np.asarray(w, dtype=float))

    def depends_on(self, name: str) -> bool:
        return any(name in e.variables() for row in self.g for e in row)

    def to_dict(self) -> dict:
        return {"coords": list(self.coords), "g": [[str(e) for e in row] for row in self.g]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricField":
        coords = data["coords"]
        return cls(coords, [[E.parse(s, coords) for s in row] for row in data["g"]])

    def __repr__(self):
        return f"MetricField(coords={list(self.coords)})"


def signature(G: np.ndarray, tol: float = 1e-10) -> tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts of a symmetric matrix."""
    w = np.linalg.eigvalsh(0.5 * (G + G.T))
    scale = max(1.0, float(np.max(np.abs(w))))
    pos = int(np.sum(w > tol * scale))
    neg = int(np.sum(w < -tol * scale))
    return pos, neg, len(w) - pos - neg


# ---------------------------------------------------------------------------
# Assembly helpers
# ---------------------------------------------------------------------------


class _Sym:
    """Accumulates symmetric products of 1-forms into a coefficient matrix."""

    def __init__(self, d):
        self.d = d
        self.m = [[[] for _ in range(d)] for _ in range(d)]

    def add(self, a, b, scale=1):
        c = E.as_expr(scale)
        for i, ai in enumerate(a):
            if E.simplify(ai) == E.ZERO:
                continue
            for j, bj in enumerate(b):
                if E.simplify(bj) == E.ZERO:
                    continue
                t = E.Mul(c, E.Mul(ai, bj))
                self.m[i][j].append(t)
                self.m[j][i].append(t)

    def matrix(self):
        return [[E.total(cell) for cell in row] for row in self.m]


def _basis(d, k, coeff=E.ONE):
    v = [E.ZERO] * d
    v[k] = E.as_expr(coeff)
    return v


def fefferman_forms(S: LCStructure):
    """The 1-forms sigma, theta^i, pi_i and varpi over (x, u, p, s)."""
    n = S.n
    d = 2 * n + 2
    sigma = [E.ZERO] * d
    sigma[n] = E.ONE
    for i in range(n):
        sigma[i] = E.simplify(E.Neg(E.Var(S.pname(i))))
    theta = [_basis(d, i) for i in range(n)]
    pi = []
    for i in range(n):
        r = _basis(d, n + 1 + i)
        for j in range(n):
            r[j] = E.simplify(E.Neg(S.f[i][j]))
        pi.append(r)
    alpha_terms = []
    for i in range(n):
        for j in range(n):
            alpha_terms.append(E.diff(E.diff(S.f[i][j], S.pname(i)), S.pname(j)))
    alpha = E.simplify(E.Mul(E.const(Fraction(-1, (n + 1) * (n + 2))), E.total(alpha_terms)))
    beta = []
    for j in range(n):
        div = E.total(E.diff(S.f[i][j], S.pname(i)) for i in range(n))
        beta.append(E.simplify(E.Mul(E.const(Fraction(-2, n + 2)), div)))
    varpi = [E.ZERO] * d
    for a in range(d):
        varpi[a] = E.simplify(E.Mul(alpha, sigma[a]))
    for j in range(n):
        varpi[j] = E.simplify(E.Add(varpi[j], beta[j]))
    varpi[d - 1] = E.const(2)
    return sigma, theta, pi, varpi, alpha, beta


def build_fefferman(S: LCStructure, guarded: bool = False, box=None, tol: float = 1e-10) -> MetricField:
    """Representative Fefferman metric theta^i . pi_i + sigma . varpi."""
    if guarded:
        rep = integrability_report(S, box, tol)
        if not rep.integrable:
            raise NotIntegrable(f"integrability defect {rep.max_defect:.3e} exceeds {tol}")
    n = S.n
    d = 2 * n + 2
    sigma, theta, pi, varpi, _, _ = fefferman_forms(S)
    acc = _Sym(d)
    for i in range(n):
        acc.add(theta[i], pi[i])
    acc.add(sigma, varpi)
    return MetricField(list(S.names) + ["s"], acc.matrix())


# ---------------------------------------------------------------------------
# Patterson-Walker and projective Fefferman metrics
# ---------------------------------------------------------------------------


def build_patterson_walker(gamma) -> MetricField:
    """dx^a . dy_a - y_c Gamma^c_ab dx^a . dx^b on the cotangent bundle."""
    gamma.check(require_trace_free=True)
    m = gamma.m
    base = list(gamma.names)
    fiber = [f"y{a + 1}" for a in range(m)]
    coords = base + fiber
    d = 2 * m
    g = [[E.ZERO] * d for _ in range(d)]
    for a in range(m):
        g[a][m + a] = g[m + a][a] = E.ONE
    for a in range(m):
        for b in range(a, m):
            terms = [E.Mul(E.Var(fiber[c]), gamma[c, a, b]) for c in range(m)]
            g[a][b] = g[b][a] = E.simplify(E.Mul(E.const(-2), E.total(terms)))
    return MetricField(coords, g)


def build_fefferman_projective(gamma) -> MetricField:
    """(Gamma^{n+1}_bc - p_k Gamma^k_bc) dx^b . dx^c + dx^i . dp_i + 2 sigma . ds."""
    gamma.check(require_trace_free=True)
    m = gamma.m
    n = m - 1
    names = list(gamma.names) + [f"p{i + 1}" for i in range(n)] + ["s"]
    d = 2 * n + 2
    g = [[E.ZERO] * d for _ in range(d)]
    for b in range(m):
        for c in range(b, m):
            terms = [gamma[n, b, c]]
            for k in range(n):
                terms.append(E.Neg(E.Mul(E.Var(f"p{k + 1}"), gamma[k, b, c])))
            g[b][c] = g[c][b] = E.simplify(E.Mul(E.const(2), E.total(terms)))
    for i in range(n):
        g[i][m + i] = g[m + i][i] = E.ONE
        g[i][d - 1] = g[d - 1][i] = E.Mul(E.const(-2), E.Var(f"p{i + 1}"))
    g[n][d - 1] = g[d - 1][n] = E.const(2)
    return MetricField(names, g)


def pw_transform(point, branch: int = 1) -> np.ndarray:
    """(x, u, p, s) -> (x, u, y) with y_{n+1} = branch*exp(-2s), y_i = -p_i y_{n+1}."""
    point = np.asarray(point, dtype=float)
    n = (len(point) - 2) // 2
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    base = point[: n + 1]
    p = point[n + 1 : 2 * n + 1]
    s = point[2 * n + 1]
    ylast = branch * np.exp(-2.0 * s)
    return np.concatenate([base, -p * ylast, [ylast]])


def pw_inverse(point) -> tuple[np.ndarray, int]:
    """(x, u, y) -> ((x, u, p, s), branch) with p_i = -y_i / y_{n+1}."""
    point = np.asarray(point, dtype=float)
    m = len(point) // 2
    n = m - 1
    ylast = point[2 * m - 1]
    if ylast == 0.0:
        raise ValueError("y_{n+1} = 0 is outside the image")
    p = -point[m : m + n] / ylast
    s = -0.5 * np.log(abs(ylast))
    return np.concatenate([point[:m], p, [s]]), (1 if ylast > 0 else -1)


def pw_jacobian(point, branch: int = 1) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    n = (len(point) - 2) // 2
    m = n + 1
    p = point[m : m + n]
    s = point[-1]
    ylast = branch * np.exp(-2.0 * s)
    J = np.zeros((2 * m, 2 * n + 2))
    for a in range(m):
        J[a, a] = 1.0
    for i in range(n):
        J[m + i, m + i] = -ylast
        J[m + i, -1] = 2.0 * p[i] * ylast
    J[2 * m - 1, -1] = -2.0 * ylast
    return J


def pw_pullback(g_pw: MetricField, point, branch: int = 1) -> np.ndarray:
    """Pullback of the Patterson-Walker metric to (x, u, p, s) coordinates."""
    J = pw_jacobian(point, branch)
    G = g_pw(pw_transform(point, branch))
    return J.T @ G @ J


def pw_conformal_factor(point, branch: int = 1) -> float:
    """The pullback equals this factor, -y_{n+1} = -branch*exp(-2s), times the
    projective Fefferman metric."""
    s = float(np.asarray(point, dtype=float)[-1])
    return -branch * float(np.exp(-2.0 * s))


def lie_derivative_check(g: MetricField, direction: str, q, h: float | None = None) -> float:
    """max |d g_ab / d direction| at q (symbolic, or central differences with step h)."""
    c = g.index(direction)
    if h is None:
        return float(np.max(np.abs(g.derivatives(q)[c])))
    q = np.asarray(q, dtype=float)
    e = np.zeros_like(q)
    e[c] = h
    return float(np.max(np.abs((g(q + e) - g(q - e)) / (2 * h))))
