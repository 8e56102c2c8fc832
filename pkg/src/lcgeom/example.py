"""End-to-end verification of the worked example f = (p + e^{-2x} p^3) / 2.

The structure is projective, the x-axis is a path, and one chain over the
x-axis has the closed form

    p(x) = (sqrt(e^{x+1}) - sqrt(e^x)) / (sqrt(e) - sqrt(e^x)).

Each point of that chain carries a path.  The paths at x = 0 and x = 1 are
gamma_0 = e^x - 1 and gamma_1 = 2e sqrt(1 - e^{x-1}).  They meet in a single
point, and the path of any other chain point misses it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import expr as E
from .curves import KropinaSystem
from .lc_core import LCStructure, example_structure

GAMMA0 = "exp(x1) - 1"
GAMMA1 = "2*exp(1)*sqrt(1 - exp(x1 - 1))"
CHAIN_P = "(sqrt(exp(x1 + 1)) - sqrt(exp(x1)))/(sqrt(exp(1)) - sqrt(exp(x1)))"

E_ = math.e
X_STAR = math.log(2 * math.sqrt(E_ * (2 * E_ - 1)) - (2 * E_ - 1))
Y_STAR = 2 * math.sqrt(E_ * (2 * E_ - 1)) - 2 * E_

TOL_RESIDUAL = 1e-10
TOL_POINT = 1e-10
MIN_MISS = 1e-3


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialise {type(value).__name__}")


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    value: float
    tol: float
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)
        self.tol = float(self.tol)


@dataclass
class ExampleReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed_ids(self) -> list:
        return [c.id for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "failed": self.failed_ids, "checks": [asdict(c) for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_plain)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            cmp = ">" if c.id == 4 else "<="
            lines.append(f"[{tag}] check {c.id} {c.name}: {c.value:.3e} ({cmp} {c.tol:g})")
        return "\n".join(lines)


def _derivs(source: str):
    g = E.parse(source, ["x1"])
    g1 = g.diff("x1").simplify()
    g2 = g1.diff("x1").simplify()
    return g, g1, g2


def _ode_rhs(S: LCStructure, x, y, yd):
    names = S.names
    return S.f[0][0].eval({names[0]: x, names[1]: y, names[2]: yd})


def check_paths(S: LCStructure, samples: int = 201) -> CheckResult:
    """gamma_0 and gamma_1 solve y'' = f(x, y, y')."""
    worst = {}
    for label, src, (a, b) in (("gamma_0", GAMMA0, (-1.0, 1.5)), ("gamma_1", GAMMA1, (-1.0, 0.9))):
        g, g1, g2 = _derivs(src)
        res = 0.0
        for x in np.linspace(a, b, samples):
            env = {"x1": float(x)}
            r = g2.eval(env) - _ode_rhs(S, float(x), g.eval(env), g1.eval(env))
            res = max(res, abs(r))
        worst[label] = res
    value = max(worst.values())
    return CheckResult(1, "path ODE residual", value <= TOL_RESIDUAL, value, TOL_RESIDUAL, worst)


def check_chain(S: LCStructure, interval=(0.0, 0.8), samples: int = 201) -> CheckResult:
    """The closed-form chain solves the chain equations of S.

    Reports the reduced equation p'' p - 2 p'^2 + p' p / 2 and both
    Euler-Lagrange residuals of the Kropina metric of S along y = 0.
    """
    p, p1, p2 = _derivs(CHAIN_P)
    K = KropinaSystem(S)
    reduced = rp_max = ry_max = 0.0
    for x in np.linspace(interval[0], interval[1], samples):
        env = {"x1": float(x)}
        P, PD, PDD = p.eval(env), p1.eval(env), p2.eval(env)
        reduced = max(reduced, abs(PDD * P - 2 * PD**2 + 0.5 * PD * P))
        rp, ry = K.residuals(float(x), 0.0, 0.0, 0.0, P, PD, PDD)
        rp_max, ry_max = max(rp_max, abs(rp)), max(ry_max, abs(ry))
    value = max(reduced, rp_max, ry_max)
    detail = {"reduced": reduced, "el_p": rp_max, "el_y": ry_max, "interval": list(interval)}
    return CheckResult(2, "chain equation residual", value <= TOL_RESIDUAL, value, TOL_RESIDUAL, detail)


def check_intersection() -> CheckResult:
    g0, g1 = E.parse(GAMMA0, ["x1"]), E.parse(GAMMA1, ["x1"])
    h = lambda x: g0.eval({"x1": x}) - g1.eval({"x1": x})
    # gamma_0 increases and gamma_1 decreases on x < 1, so h has at most one root
    grid = np.linspace(-5.0, 1.0, 6001)
    vals = np.array([h(float(x)) for x in grid])
    crossings = int(np.sum(np.sign(vals[:-1]) != np.sign(vals[1:])))
    x = brentq(h, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    y = g0.eval({"x1": x})
    err = max(abs(x - X_STAR), abs(y - Y_STAR))
    detail = {"x": x, "y": y, "x_star": X_STAR, "y_star": Y_STAR, "crossings": crossings}
    return CheckResult(3, "intersection point", err <= TOL_POINT and crossings == 1, err, TOL_POINT, detail)


def path_through(x0: float, p0: float):
    """Constants (C1, C2) of the path y = C2 +- (2/C1) sqrt(C1 e^x + 1) through (x0, 0) with slope p0."""
    C1 = (math.exp(2 * x0) / p0**2 - 1.0) / math.exp(x0)
    if C1 == 0.0:
        return 0.0, -math.copysign(math.exp(x0), p0)
    C2 = -math.copysign(1.0, p0) * (2.0 / C1) * math.sqrt(C1 * math.exp(x0) + 1.0)
    return C1, C2


def miss_distance(x0: float, p0: float, point=(X_STAR, Y_STAR)) -> float:
    """Euclidean distance from ``point`` to the full path through (x0, 0) with slope p0."""
    C1, C2 = path_through(x0, p0)
    px, py = point
    if C1 == 0.0:
        sgn = math.copysign(1.0, p0)
        sq = lambda x: (x - px) ** 2 + (sgn * math.exp(x) + C2 - py) ** 2
        grid = np.linspace(px - 5, px + 5, 4001)
        k = int(np.argmin([sq(float(x)) for x in grid]))
        res = minimize_scalar(sq, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, 4000)]), method="bounded",
                              options={"xatol": 1e-14})
        return math.sqrt(res.fun)
    # both branches at once: x = ln(C1 Y^2 / 4 - 1 / C1) with Y = y - C2
    def sq(Y):
        arg = C1 * Y * Y / 4.0 - 1.0 / C1
        if arg <= 0:
            return math.inf
        return (math.log(arg) - px) ** 2 + (Y + C2 - py) ** 2

    if C1 > 0:
        lo, hi = -50.0, 50.0
    else:
        r = 2.0 / abs(C1)
        lo, hi = -r * (1 - 1e-15), r * (1 - 1e-15)
    grid = np.linspace(lo, hi, 40001)
    d = np.array([sq(float(Y)) for Y in grid])
    k = int(np.argmin(d))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(sq, bounds=(a, b), method="bounded", options={"xatol": 1e-14})
    return math.sqrt(min(res.fun, d[k]))


def chain_p(x: float) -> float:
    return E.parse(CHAIN_P, ["x1"]).eval({"x1": x})


def check_miss(x0: float = 0.5, sweep=(0.1, 0.9), count: int = 17) -> CheckResult:
    p0 = chain_p(x0)
    margin = miss_distance(x0, p0)
    sweep_vals = {f"{x:.4f}": miss_distance(float(x), chain_p(float(x))) for x in np.linspace(*sweep, count)}
    smallest = min(sweep_vals.values())
    ok = margin > MIN_MISS and smallest > MIN_MISS
    detail = {"x0": x0, "p0": p0, "sweep_min": smallest, "sweep": sweep_vals}
    return CheckResult(4, "path miss margin", ok, margin, MIN_MISS, detail)


def verify_example(S: LCStructure | None = None) -> ExampleReport:
    S = S or example_structure()
    if S.n != 1:
        raise ValueError("the worked example lives in dimension three (n = 1)")
    return ExampleReport([check_paths(S), check_chain(S), check_intersection(), check_miss()])
