"""Lagrangian contact structures in adapted coordinates (x^i, u, p_i).

A structure is given by its symmetric matrix of defining functions ``f_ij``.
The E-frame is ``X_i = d/dx^i + p_i d/du + f_ij d/dp_j`` and the adapted
coframe is ``sigma = du - p_i dx^i``, ``theta^i = dx^i``,
``pi_i = dp_i - f_ij dx^j``.  Tangent vectors and covectors are arrays in the
coordinate order (x^1..x^n, u, p_1..p_n).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import expr as E
from . import kernels
from ._program import compile_programs

ZERO_TOL = 1e-12


class LCError(Exception):
    pass


class NotSymmetric(LCError):
    pass


class EvaluationError(LCError):
    pass


def coordinate_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)] + ["u"] + [f"p{i + 1}" for i in range(n)]


@dataclass(frozen=True)
class PointM:
    x: tuple
    u: float
    p: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "p", tuple(self.p))
        if len(self.x) != len(self.p):
            raise ValueError("x and p must have the same length")

    @property
    def n(self) -> int:
        return len(self.x)

    def as_array(self) -> np.ndarray:
        return np.array([*self.x, self.u, *self.p], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "PointM":
        arr = list(arr)
        if len(arr) % 2 != 1:
            raise ValueError("a point of M has 2n+1 coordinates")
        n = len(arr) // 2
        return cls(arr[:n], arr[n], arr[n + 1 :])


def as_point_array(q, n: int) -> np.ndarray:
    arr = q.as_array() if isinstance(q, PointM) else np.asarray(q, dtype=float)
    if arr.shape != (2 * n + 1,):
        raise ValueError(f"expected {2 * n + 1} coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point has non-finite coordinates")
    return arr


class LCStructure:
    """Dimension parameter ``n`` and symmetric defining functions ``f``."""

    def __init__(self, n: int, f):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = n
        self.names = tuple(coordinate_names(n))
        rows = [[E.as_expr(v) for v in row] for row in f]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError(f"f must be a {n}x{n} matrix")
        allowed = set(self.names)
        for i in range(n):
            for j in range(n):
                extra = rows[i][j].variables() - allowed
                if extra:
                    raise E.UnboundVariable(sorted(extra)[0])
        for i in range(n):
            for j in range(i + 1, n):
                if rows[i][j] != rows[j][i]:
                    if not E.equal(rows[i][j], rows[j][i]):
                        raise NotSymmetric(f"f[{i}][{j}] != f[{j}][{i}]")
                    rows[j][i] = rows[i][j]
        self.f = tuple(tuple(r) for r in rows)

    @classmethod
    def from_strings(cls, n: int, rows: Sequence[Sequence[str]]) -> "LCStructure":
        names = coordinate_names(n)
        return cls(n, [[E.parse(s, names) for s in row] for row in rows])

    @classmethod
    def scalar(cls, source: str) -> "LCStructure":
        """n = 1 structure from a single defining function in x1, u, p1."""
        return cls.from_strings(1, [[source]])

    def __repr__(self):
        return f"LCStructure(n={self.n}, f={[[str(v) for v in r] for r in self.f]})"

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    def xname(self, i):
        return self.names[i]

    def pname(self, i):
        return self.names[self.n + 1 + i]

    # -- compiled evaluators ------------------------------------------------

    @cached_property
    def _f_prog(self):
        return compile_programs([e for row in self.f for e in row], self.names)

    def f_values(self, q) -> np.ndarray:
        arr = as_point_array(q, self.n)
        vals, st = kernels.eval_programs(self._f_prog, arr)
        if st:
            raise EvaluationError(f"domain error evaluating f at {arr.tolist()}")
        return vals.reshape(self.n, self.n)

    def apply_X(self, i: int, e: E.Expression) -> E.Expression:
        """Symbolic action of the frame vector X_i on an expression."""
        n = self.n
        terms = [E.diff(e, self.xname(i)), E.Mul(E.Var(self.pname(i)), E.diff(e, "u"))]
        for k in range(n):
            terms.append(E.Mul(self.f[i][k], E.diff(e, self.pname(k))))
        return E.total(terms)

    @cached_property
    def defect_expressions(self):
        """D[i][j][l] = X_i(f_jl) - X_j(f_il) as expressions."""
        n = self.n
        xf = [[[self.apply_X(i, self.f[j][l]) for l in range(n)] for j in range(n)] for i in range(n)]
        return [
            [[E.simplify(E.Sub(xf[i][j][l], xf[j][i][l])) for l in range(n)] for j in range(n)]
            for i in range(n)
        ]

    @cached_property
    def _defect_prog(self):
        flat = [self.defect_expressions[i][j][l] for i in range(self.n) for j in range(self.n) for l in range(self.n)]
        return compile_programs(flat, self.names)

    @cached_property
    def defect_symbolically_zero(self) -> bool:
        n = self.n
        return all(
            E.is_zero(self.defect_expressions[i][j][l])
            for i in range(n)
            for j in range(i + 1, n)
            for l in range(n)
        )


# ---------------------------------------------------------------------------
# Frames and coframes
# ---------------------------------------------------------------------------


def frame_E(S: LCStructure, q) -> np.ndarray:
    """Rows are X_1..X_n in (x, u, p) components."""
    n = S.n
    arr = as_point_array(q, n)
    f = S.f_values(arr)
    X = np.zeros((n, 2 * n + 1))
    for i in range(n):
        X[i, i] = 1.0
        X[i, n] = arr[n + 1 + i]
        X[i, n + 1 :] = f[i]
    return X


def frame_F(S: LCStructure, q=None) -> np.ndarray:
    n = S.n
    F = np.zeros((n, 2 * n + 1))
    for i in range(n):
        F[i, n + 1 + i] = 1.0
    return F


@dataclass(frozen=True)
class CoframeValue:
    sigma: np.ndarray
    theta: np.ndarray
    pi: np.ndarray

    @property
    def n(self):
        return self.theta.shape[0]

    def matrix(self) -> np.ndarray:
        """Rows sigma, theta^1..theta^n, pi_1..pi_n."""
        return np.vstack([self.sigma[None, :], self.theta, self.pi])

    def pair(self, v) -> tuple:
        v = np.asarray(v, dtype=float)
        return float(self.sigma @ v), self.theta @ v, self.pi @ v


def coframe(S: LCStructure, q) -> CoframeValue:
    n = S.n
    arr = as_point_array(q, n)
    f = S.f_values(arr)
    d = 2 * n + 1
    sigma = np.zeros(d)
    sigma[n] = 1.0
    sigma[:n] = -arr[n + 1 :]
    theta = np.zeros((n, d))
    pi = np.zeros((n, d))
    for i in range(n):
        theta[i, i] = 1.0
        pi[i, n + 1 + i] = 1.0
        pi[i, :n] = -f[i]
    return CoframeValue(sigma, theta, pi)


def coframe_expressions(S: LCStructure):
    """Symbolic coframe: (sigma, theta, pi) as lists of coefficient expressions."""
    n = S.n
    d = 2 * n + 1
    sigma = [E.ZERO] * d
    sigma[n] = E.ONE
    for i in range(n):
        sigma[i] = E.Neg(E.Var(S.pname(i)))
    theta = []
    pi = []
    for i in range(n):
        t = [E.ZERO] * d
        t[i] = E.ONE
        theta.append(t)
        r = [E.ZERO] * d
        r[n + 1 + i] = E.ONE
        for j in range(n):
            r[j] = E.simplify(E.Neg(S.f[i][j]))
        pi.append(r)
    return sigma, theta, pi


# ---------------------------------------------------------------------------
# Integrability
# ---------------------------------------------------------------------------


def integrability_defect(S: LCStructure, q) -> np.ndarray:
    n = S.n
    arr = as_point_array(q, n)
    vals, st = kernels.eval_programs(S._defect_prog, arr)
    if st:
        raise EvaluationError(f"domain error evaluating the defect at {arr.tolist()}")
    return vals.reshape(n, n, n)


def sample_box(box, count: int) -> np.ndarray:
    """Deterministic Halton sample of ``count`` points in an axis-aligned box."""
    from scipy.stats import qmc

    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    unit = qmc.Halton(d=len(box), scramble=False).random(count + 1)[1:]
    return lo + unit * (hi - lo)


@dataclass
class IntegrabilityReport:
    integrable: bool
    symbolic_zero: bool
    max_defect: float
    samples: int


def integrability_report(S: LCStructure, box=None, tol: float = 1e-10, count: int = 256) -> IntegrabilityReport:
    if box is None:
        box = [(-1.0, 1.0)] * S.dim
    symbolic = S.defect_symbolically_zero
    worst = 0.0
    used = 0
    for q in sample_box(box, count):
        try:
            D = integrability_defect(S, q)
        except EvaluationError:
            continue
        used += 1
        worst = max(worst, float(np.max(np.abs(D))) if D.size else 0.0)
    return IntegrabilityReport(symbolic or worst <= tol, symbolic, worst, used)


def is_integrable(S: LCStructure, box=None, tol: float = 1e-10) -> bool:
    return integrability_report(S, box, tol).integrable


# ---------------------------------------------------------------------------
# Coframe rescaling
# ---------------------------------------------------------------------------


def rescale_values(cof: CoframeValue, fval: float, df) -> CoframeValue:
    """Apply the rescaling by ``exp(f)`` given f and df at a point.

    The coefficients of df in the coframe are found by solving the linear
    system ``df = c0 sigma + c_i theta^i + c^i pi_i``.
    """
    n = cof.n
    M = cof.matrix()
    c = np.linalg.solve(M.T, np.asarray(df, dtype=float))
    f_up = c[n + 1 :]  # coefficients of pi_i
    f_low = c[1 : n + 1]  # coefficients of theta^i
    ef = np.exp(fval)
    sigma = ef * ef * cof.sigma
    theta = ef * (cof.theta - 2.0 * f_up[:, None] * cof.sigma[None, :])
    pi = ef * (cof.pi + 2.0 * f_low[:, None] * cof.sigma[None, :])
    return CoframeValue(sigma, theta, pi)


class RescaledCoframe:
    """Evaluator of the coframe rescaled by ``exp(fscale)``."""

    def __init__(self, S: LCStructure, fscale):
        self.S = S
        self.fscale = E.as_expr(fscale)
        extra = self.fscale.variables() - set(S.names)
        if extra:
            raise E.UnboundVariable(sorted(extra)[0])
        grads = [E.diff(self.fscale, v) for v in S.names]
        self._prog = compile_programs([self.fscale] + grads, S.names)

    def scale_data(self, q):
        arr = as_point_array(q, self.S.n)
        vals, st = kernels.eval_programs(self._prog, arr)
        if st:
            raise EvaluationError(f"domain error evaluating the scale at {arr.tolist()}")
        return float(vals[0]), vals[1:].copy()

    def __call__(self, q) -> CoframeValue:
        fval, df = self.scale_data(q)
        return rescale_values(coframe(self.S, q), fval, df)

    def expressions(self):
        """Symbolic rescaled coframe using f^i = df/dp_i, f_i = X_i(f)."""
        S = self.S
        n = S.n
        sigma, theta, pi = coframe_expressions(S)
        f = self.fscale
        e1 = E.Call("exp", f)
        e2 = E.Call("exp", E.Mul(E.const(2), f))
        f_up = [E.diff(f, S.pname(i)) for i in range(n)]
        f_low = [S.apply_X(i, f) for i in range(n)]
        two = E.const(2)
        s_hat = [E.simplify(E.Mul(e2, c)) for c in sigma]
        t_hat = [
            [E.simplify(E.Mul(e1, E.Sub(theta[i][a], E.Mul(E.Mul(two, f_up[i]), sigma[a])))) for a in range(S.dim)]
            for i in range(n)
        ]
        p_hat = [
            [E.simplify(E.Mul(e1, E.Add(pi[i][a], E.Mul(E.Mul(two, f_low[i]), sigma[a])))) for a in range(S.dim)]
            for i in range(n)
        ]
        return s_hat, t_hat, p_hat


def rescale_coframe(S: LCStructure, fscale) -> RescaledCoframe:
    return RescaledCoframe(S, fscale)


# ---------------------------------------------------------------------------
# Classification of tangent vectors
# ---------------------------------------------------------------------------

KINDS = ("zero", "in_E", "in_F", "null_generic", "contact_nonnull", "transverse")


def _negligible(value: float, scale: float) -> bool:
    return abs(value) <= ZERO_TOL * (1.0 + scale)


def classify_point_vector(S: LCStructure, q, v) -> str:
    v = np.asarray(v, dtype=float)
    if v.shape != (S.dim,):
        raise ValueError(f"expected a {S.dim}-vector")
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    if scale == 0.0:
        return "zero"
    cof = coframe(S, q)
    s, th, pi = cof.pair(v)
    if not _negligible(s, scale):
        return "transverse"
    th_zero = all(_negligible(t, scale) for t in th)
    pi_zero = all(_negligible(t, scale) for t in pi)
    if pi_zero and not th_zero:
        return "in_E"
    if th_zero and not pi_zero:
        return "in_F"
    if th_zero and pi_zero:
        return "zero"
    phi = float(th @ pi)
    if _negligible(phi, scale * scale):
        return "null_generic"
    return "contact_nonnull"


# ---------------------------------------------------------------------------
# Flat embedding
# ---------------------------------------------------------------------------


def flat_embedding(q):
    """Return (v, w) with v = (x, u) and w = (p, u - x.p)."""
    if isinstance(q, PointM):
        x, u, p = list(q.x), q.u, list(q.p)
    else:
        q = list(q)
        n = len(q) // 2
        x, u, p = q[:n], q[n], q[n + 1 :]
    v = [*x, u]
    w = [*p, u - sum(a * b for a, b in zip(x, p))]
    return v, w


def hyperquadric_residual(v, w):
    n = len(v) - 1
    return sum(v[j] * w[j] for j in range(n)) - v[n] + w[n]


def flat_structure(n: int) -> LCStructure:
    return LCStructure(n, [[E.ZERO] * n for _ in range(n)])


def potential_structure(n: int, phi: E.Expression) -> LCStructure:
    """f_ij = d^2 phi / dx^i dx^j for phi depending on x only."""
    names = coordinate_names(n)
    f = [[E.diff(E.diff(phi, names[i]), names[j]) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i):
            f[i][j] = f[j][i]
    return LCStructure(n, f)


EXAMPLE_SOURCE = "0.5*(p1 + exp(-2*x1)*p1^3)"


def example_structure() -> LCStructure:
    return LCStructure.scalar(EXAMPLE_SOURCE)
