"""Chains, null-chains and Kropina geodesics.

Chains and null-chains are computed as projections of null geodesics of the
Fefferman metric on (x, u, p, s).  For n = 1 chains can also be integrated
directly from the Euler-Lagrange equations of the Kropina function in the
x-parametrisation.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import expr as E
from . import kernels
from ._program import compile_programs
from .fefferman import MetricField, build_fefferman
from .lc_core import (
    LCStructure,
    as_point_array,
    classify_point_vector,
    coframe,
    integrability_report,
)


class CurveError(Exception):
    pass


class IntegrationError(CurveError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ContactNonNull(CurveError):
    pass


class ContactDirection(CurveError):
    pass


class NotTransverse(CurveError):
    pass


class NotNullGeneric(CurveError):
    pass


class TransversalityLost(CurveError):
    pass


class ShootingFailed(CurveError):
    pass


class SingularMetric(CurveError):
    pass


@dataclass
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    initial_step: float = 0.0
    max_steps: int = 200000
    null_drift_tol: float = 1e-8
    samples: int = 201

    def __post_init__(self):
        if min(self.rel_tol, self.abs_tol, self.null_drift_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.samples < 2:
            raise ValueError("need at least two samples")


@dataclass
class Trajectory:
    kind: str
    coords: tuple
    t: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    stats: dict = field(default_factory=dict)
    accelerations: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        return self.points[:, self.coords.index(name)]

    def to_rows(self):
        header = ["t", *self.coords, *(f"v_{c}" for c in self.coords)]
        rows = [[t, *p, *v] for t, p, v in zip(self.t, self.points, self.velocities)]
        return header, rows

    def to_csv(self) -> str:
        header, rows = self.to_rows()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "coords": list(self.coords),
            "t": self.t.tolist(),
            "points": self.points.tolist(),
            "velocities": self.velocities.tolist(),
            "stats": {k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in self.stats.items()},
            "meta": {k: v for k, v in self.meta.items() if isinstance(v, (str, int, float, bool, list))},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _time_grid(tspan, samples: int) -> np.ndarray:
    arr = np.asarray(tspan, dtype=float)
    if arr.ndim == 1 and len(arr) == 2:
        return np.linspace(arr[0], arr[1], samples)
    if arr.ndim != 1 or len(arr) < 2:
        raise ValueError("tspan must be (t0, t1) or an increasing array")
    d = np.diff(arr)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("sample times must be strictly monotone")
    return arr


def fefferman_metric(S: LCStructure) -> MetricField:
    """Fefferman metric of S, cached on the structure."""
    g = getattr(S, "_fefferman_cache", None)
    if g is None:
        g = build_fefferman(S)
        S._fefferman_cache = g
    return g


# ---------------------------------------------------------------------------
# Christoffel symbols and geodesics
# ---------------------------------------------------------------------------


def christoffel(g: MetricField, q, mode: str = "symbolic", h: float = 1e-5) -> np.ndarray:
    """Gamma[k, i, j] = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)."""
    q = np.asarray(q, dtype=float)
    d = g.dim
    G = g(q)
    if mode == "symbolic":
        dG = g.derivatives(q)
    elif mode == "fd":
        dG = np.empty((d, d, d))
        for c in range(d):
            e = np.zeros(d)
            e[c] = h
            dG[c] = (g(q + e) - g(q - e)) / (2 * h)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    lower = 0.5 * (np.einsum("ijl->lij", dG) + np.einsum("jil->lij", dG) - np.einsum("lij->lij", dG))
    try:
        out = np.linalg.solve(G, lower.reshape(d, d * d)).reshape(d, d, d)
    except np.linalg.LinAlgError:
        out = None
    if out is None or not np.all(np.isfinite(out)):
        raise SingularMetric(f"metric is singular at {q.tolist()}")
    return out


def _raise_status(status: int, traj: Trajectory | None):
    msg = kernels.STATUS.get(status, f"status {status}")
    if status == 3:
        raise SingularMetric(msg)
    raise IntegrationError(f"integration stopped: {msg}", traj)


def integrate_geodesic(
    g: MetricField, q0, v0, tspan, cfg: IntegratorConfig | None = None, kind: str = "geodesic", backend=None
) -> Trajectory:
    cfg = cfg or IntegratorConfig()
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    d = g.dim
    if q0.shape != (d,) or v0.shape != (d,):
        raise ValueError(f"expected {d}-dimensional point and velocity")
    ts = _time_grid(tspan, cfg.samples)
    G, DG = g.programs
    out, filled, status, stats = kernels.dopri(
        1, G, DG, np.concatenate([q0, v0]), ts, cfg.rel_tol, cfg.abs_tol, cfg.initial_step, cfg.max_steps,
        backend=backend,
    )
    traj = Trajectory(kind, g.coords, ts[:filled], out[:filled, :d].copy(), out[:filled, d:].copy(), stats)
    if status != 0:
        _raise_status(status, traj)
    acc = np.empty_like(traj.velocities)
    energy = np.empty(len(ts))
    for k, (x, v) in enumerate(zip(traj.points, traj.velocities)):
        acc[k] = -np.einsum("kij,i,j->k", christoffel(g, x), v, v)
        energy[k] = v @ g(x) @ v
    traj.accelerations = acc
    traj.meta["energy"] = energy
    stats["energy_drift"] = float(np.max(np.abs(energy - energy[0])))
    stats["max_abs_energy"] = float(np.max(np.abs(energy)))
    return traj


# ---------------------------------------------------------------------------
# Lifts to the Fefferman space
# ---------------------------------------------------------------------------


def null_lift(S: LCStructure, q, v, k: float = 0.0, s0: float = 0.0):
    """Return (point, velocity, kind) of the null lift of v at (q, s0)."""
    q = as_point_array(q, S.n)
    v = np.asarray(v, dtype=float)
    kind = classify_point_vector(S, q, v)
    if kind == "zero":
        raise ValueError("cannot lift the zero vector")
    if kind == "contact_nonnull":
        raise ContactNonNull("contact_nonnull: vector is tangent to the contact distribution but not null")
    g = fefferman_metric(S)
    point = np.append(q, s0)
    if kind == "transverse":
        G = g(point)
        A = v @ G[:-1, :-1] @ v
        slope = 2.0 * (G[-1, :-1] @ v)
        sdot = -A / slope
    else:
        sdot = float(k)
    return point, np.append(v, sdot), kind


def _check_integrable(S: LCStructure, q):
    if S.n == 1 or S.defect_symbolically_zero:
        return
    box = [(c - 0.5, c + 0.5) for c in q]
    rep = integrability_report(S, box, 1e-10, count=64)
    if not rep.integrable:
        from .fefferman import NotIntegrable

        raise NotIntegrable(f"structure is not integrable near {np.asarray(q, dtype=float).tolist()} (defect {rep.max_defect:.3e})")


def _project(traj: Trajectory, kind: str, S: LCStructure, g: MetricField) -> Trajectory:
    d = S.dim
    kp = np.array([g(x)[-1] @ v for x, v in zip(traj.points, traj.velocities)])
    proj = Trajectory(
        kind,
        tuple(S.names),
        traj.t,
        traj.points[:, :d].copy(),
        traj.velocities[:, :d].copy(),
        dict(traj.stats),
        traj.accelerations[:, :d].copy(),
        {"lift": traj, "k_pairing": kp},
    )
    return proj


def chain(S: LCStructure, q, v, tspan, cfg: IntegratorConfig | None = None, s0: float = 0.0, backend=None) -> Trajectory:
    q = as_point_array(q, S.n)
    kind = classify_point_vector(S, q, v)
    if kind != "transverse":
        raise NotTransverse(f"{kind}: chains need a direction transverse to the contact distribution")
    _check_integrable(S, q)
    point, vel, _ = null_lift(S, q, v, s0=s0)
    g = fefferman_metric(S)
    lift = integrate_geodesic(g, point, vel, tspan, cfg, kind="geodesic", backend=backend)
    return _project(lift, "chain", S, g)


def null_chain(
    S: LCStructure, q, v, k: float, tspan, cfg: IntegratorConfig | None = None, s0: float = 0.0, backend=None
) -> Trajectory:
    q = as_point_array(q, S.n)
    kind = classify_point_vector(S, q, v)
    if kind not in ("null_generic", "in_E", "in_F"):
        raise NotNullGeneric(f"{kind}: null-chains need a null direction in the contact distribution")
    _check_integrable(S, q)
    point, vel, _ = null_lift(S, q, v, k=k, s0=s0)
    g = fefferman_metric(S)
    lift = integrate_geodesic(g, point, vel, tspan, cfg, kind="geodesic", backend=backend)
    out = _project(lift, "null_chain", S, g)
    out.meta["direction_kind"] = kind
    if kind != "null_generic":
        out.meta["note"] = f"degenerate {kind} lift: curved-case use of the model prescription"
    return out


def k_flow(S: LCStructure, q, s0: float, tspan, cfg: IntegratorConfig | None = None, backend=None) -> Trajectory:
    q = as_point_array(q, S.n)
    g = fefferman_metric(S)
    v0 = np.zeros(S.dim + 1)
    v0[-1] = 1.0
    traj = integrate_geodesic(g, np.append(q, s0), v0, tspan, cfg, kind="k_flow", backend=backend)
    traj.stats["projection_drift"] = float(np.max(np.abs(traj.points[:, :-1] - q)))
    return traj


# ---------------------------------------------------------------------------
# Kropina function
# ---------------------------------------------------------------------------


def kropina_value(S: LCStructure, q, v, section: E.Expression | None = None) -> float:
    """F(v) = g(V, V) / g(K, V) with V the lift of v along the section s = h(q)."""
    q = as_point_array(q, S.n)
    v = np.asarray(v, dtype=float)
    sig = float(coframe(S, q).sigma @ v)
    if abs(sig) <= 1e-12 * (1.0 + float(np.max(np.abs(v)))):
        raise ContactDirection("Kropina function is undefined on contact directions")
    g = fefferman_metric(S)
    sdot = 0.0
    s = 0.0
    if section is not None:
        grads = [E.diff(section, name) for name in S.names]
        ps = compile_programs([section] + grads, S.names)
        vals, st = kernels.eval_programs(ps, q)
        if st:
            raise CurveError("domain error evaluating the section")
        s = float(vals[0])
        sdot = float(vals[1:] @ v)
    V = np.append(v, sdot)
    G = g(np.append(q, s))
    return float(V @ G @ V) / float(G[-1] @ V)


class KropinaSystem:
    """Euler-Lagrange system of the n = 1 Kropina function in the x gauge.

    State variables are (y, p, y', p') with x as independent variable; the
    compiled programs use the names (x1, u, p1, yd, pd).
    """

    VARS = ("x1", "u", "p1", "yd", "pd")

    def __init__(self, S: LCStructure):
        if S.n != 1:
            raise ValueError("the Kropina Euler-Lagrange system is implemented for n = 1")
        self.S = S
        f = S.f[0][0]
        d = E.diff
        fp = d(f, "p1")
        fpp = d(fp, "p1")
        fppp = d(fpp, "p1")
        fx, fy = d(f, "x1"), d(f, "u")
        fpy, fppy, fppx = d(fp, "u"), d(fpp, "u"), d(fpp, "x1")
        self.parts = dict(f=f, fp=fp, fpp=fpp, fppp=fppp, fx=fx, fy=fy, fpy=fpy, fppy=fppy, fppx=fppx)
        p1, yd, pd = E.Var("p1"), E.Var("yd"), E.Var("pd")
        w = E.Sub(yd, p1)
        c = E.const
        ydd = E.total([f, E.Mul(fp, w), E.Mul(c(Fraction(1, 2)), E.Mul(fpp, w**2)),
                       E.Mul(c(Fraction(1, 6)), E.Mul(fppp, w**3))])
        fdot = E.total([fx, E.Mul(fy, yd), E.Mul(fp, pd)])
        dfpp = E.total([fppx, E.Mul(fppy, yd), E.Mul(fppp, pd)])
        num = E.total([
            E.Mul(c(2), E.Mul(E.Sub(ydd, pd), E.Sub(pd, f))),
            E.Mul(fy, w**2),
            E.Neg(E.Mul(c(Fraction(1, 6)), E.Mul(dfpp, w**3))),
            E.Mul(c(Fraction(2, 3)), E.Mul(fpy, w**3)),
            E.Mul(c(Fraction(1, 6)), E.Mul(fppy, w**4)),
        ])
        pdd = E.simplify(E.Add(fdot, E.Div(num, w)))
        self.ydd = ydd
        self.pdd = pdd
        self.rhs = compile_programs([E.Var("yd"), E.Var("pd"), ydd, pdd], self.VARS)
        self.accel = compile_programs([ydd, pdd], self.VARS)
        self._parts_prog = compile_programs(list(self.parts.values()), ("x1", "u", "p1"))

    def part_values(self, x, y, p) -> dict:
        vals, st = kernels.eval_programs(self._parts_prog, [x, y, p])
        if st:
            raise CurveError("domain error evaluating f and its derivatives")
        return dict(zip(self.parts, vals))

    def residuals(self, x, y, yd, ydd, p, pd, pdd):
        """Cleared residuals (R_p, R_y) of the two Euler-Lagrange equations."""
        v = self.part_values(x, y, p)
        w = yd - p
        rp = ydd - v["f"] - v["fp"] * w - 0.5 * v["fpp"] * w**2 - v["fppp"] * w**3 / 6.0
        fdot = v["fx"] + v["fy"] * yd + v["fp"] * pd
        dfpp = v["fppx"] + v["fppy"] * yd + v["fppp"] * pd
        ry = (
            -2.0 * (ydd - pd) * (pd - v["f"])
            + (pdd - fdot) * w
            - v["fy"] * w**2
            + dfpp * w**3 / 6.0
            - 2.0 * v["fpy"] * w**3 / 3.0
            - v["fppy"] * w**4 / 6.0
        )
        return rp, ry

    def integrate(self, x_eval, state0, cfg: IntegratorConfig | None = None, backend=None) -> Trajectory:
        cfg = cfg or IntegratorConfig()
        xs = np.asarray(x_eval, dtype=float)
        y0, p0, yd0, pd0 = (float(v) for v in state0)
        if abs(yd0 - p0) < 1e-8:
            raise TransversalityLost("initial direction is tangent to the contact distribution")
        out, filled, status, stats = kernels.dopri(
            0, self.rhs, None, [y0, p0, yd0, pd0], xs, cfg.rel_tol, cfg.abs_tol, cfg.initial_step, cfg.max_steps,
            backend=backend,
        )
        out = out[:filled]
        pts = np.column_stack([xs[:filled], out[:, 0], out[:, 1]])
        vel = np.column_stack([np.ones(filled), out[:, 2], out[:, 3]])
        traj = Trajectory("kropina_geodesic", tuple(self.S.names), xs[:filled], pts, vel, stats)
        w = out[:, 2] - out[:, 1]
        if status != 0:
            if np.any(np.abs(w) < 1e-8) or status == 2:
                raise TransversalityLost(f"integration stopped ({kernels.STATUS[status]}); |y' - p| -> 0?")
            _raise_status(status, traj)
        if np.any(np.abs(w) < 1e-8):
            raise TransversalityLost("|y' - p| fell below 1e-8")
        acc = np.zeros_like(vel)
        for k in range(filled):
            vals, st = kernels.eval_programs(self.accel, [xs[k], *out[k]])
            acc[k, 1:] = vals
        traj.accelerations = acc
        traj.stats["min_transversality"] = float(np.min(np.abs(w)))
        return traj


def kropina_geodesic_dim3(
    S: LCStructure, x_range, state0, cfg: IntegratorConfig | None = None, backend=None
) -> Trajectory:
    """Initial-value mode: state0 = (y, p, y', p') at x_range[0]."""
    cfg = cfg or IntegratorConfig()
    return KropinaSystem(S).integrate(_time_grid(x_range, cfg.samples), state0, cfg, backend)


def kropina_two_point(
    S: LCStructure,
    x_range,
    start,
    end,
    guess=(0.0, 0.0),
    cfg: IntegratorConfig | None = None,
    tol: float = 1e-11,
    max_iter: int = 60,
) -> Trajectory:
    """Shooting for (y', p') at the left end so that (y, p) hit ``end``."""
    cfg = cfg or IntegratorConfig()
    system = KropinaSystem(S)
    xs = _time_grid(x_range, cfg.samples)
    ya, pa = (float(v) for v in start)
    target = np.asarray(end, dtype=float)

    def mismatch(z):
        traj = system.integrate([xs[0], xs[-1]], (ya, pa, z[0], z[1]), cfg)
        return np.array([traj.points[-1, 1], traj.points[-1, 2]]) - target

    z = np.asarray(guess, dtype=float)
    try:
        r = mismatch(z)
    except CurveError as exc:
        raise ShootingFailed(f"initial guess does not integrate: {exc}") from None
    for it in range(max_iter):
        nrm = float(np.max(np.abs(r)))
        if nrm <= tol:
            traj = system.integrate(xs, (ya, pa, z[0], z[1]), cfg)
            traj.stats["shooting_iterations"] = it
            traj.stats["shooting_residual"] = nrm
            return traj
        J = np.empty((2, 2))
        for j in range(2):
            h = 1e-7 * max(1.0, abs(z[j]))
            dz = z.copy()
            dz[j] += h
            J[:, j] = (mismatch(dz) - r) / h
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise ShootingFailed("singular shooting Jacobian") from None
        lam = 1.0
        while lam > 1e-6:
            trial = z + lam * step
            try:
                rt = mismatch(trial)
            except CurveError:
                lam *= 0.5
                continue
            if np.max(np.abs(rt)) < nrm or lam < 1e-3:
                z, r = trial, rt
                break
            lam *= 0.5
        else:
            raise ShootingFailed("line search failed")
    raise ShootingFailed(f"no convergence after {max_iter} iterations (residual {np.max(np.abs(r)):.3e})")


# ---------------------------------------------------------------------------
# Projection to the leaf space
# ---------------------------------------------------------------------------


@dataclass
class PathProjection:
    coords: tuple
    points: np.ndarray
    residuals: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def project_to_paths(S: LCStructure, traj: Trajectory, gamma=None) -> PathProjection:
    """Drop p and evaluate the path-equation residual along the projection.

    For n = 1 the residual is y'' - f(x, y, y') in the x parametrisation; for
    n > 1 the projective geodesic residual of ``gamma`` (recovered from S when
    not given) is used.
    """
    n = S.n
    if traj.accelerations is None:
        raise CurveError("trajectory carries no accelerations")
    base = traj.points[:, : n + 1]
    vb = traj.velocities[:, : n + 1]
    ab = traj.accelerations[:, : n + 1]
    res = np.empty(len(traj))
    if n == 1:
        for k in range(len(traj)):
            x, y = base[k]
            vx, vy = vb[k]
            ax, ay = ab[k]
            if abs(vx) < 1e-12:
                raise NotTransverse("projection is vertical; x is not a parameter")
            slope = vy / vx
            ydd = (ay * vx - vy * ax) / vx**3
            res[k] = ydd - S.f_values([x, y, slope])[0, 0]
    else:
        from .projective import christoffels_from_fij, geodesic_residual

        gamma = gamma or christoffels_from_fij(S)
        for k in range(len(traj)):
            res[k] = geodesic_residual(gamma, base[k], vb[k], ab[k])
    return PathProjection(tuple(S.names[: n + 1]), base.copy(), res)
