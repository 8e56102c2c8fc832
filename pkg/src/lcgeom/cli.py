"""Command line interface.

Exit codes: 0 success, 1 I/O or parse failure, 2 mathematical precondition
failure, 3 verification failure.  Structure arguments are JSON paths; a name
prefixed with ``@`` (e.g. ``@example``) refers to a file bundled with the
package.
"""

from __future__ import annotations

import json
import sys
from fractions import Fraction

import click
import numpy as np

from . import curves as C
from . import expr as E
from . import model as MD
from .example import verify_example
from .fefferman import MetricError, build_fefferman, signature
from .files import FileFormatError, bundled, load_christoffel, load_structure, write_text
from .lc_core import LCError, LCStructure, NotSymmetric, classify_point_vector, integrability_report
from .projective import ProjectiveError, christoffels_from_fij, pw_comparison

EXIT_IO, EXIT_MATH, EXIT_VERIFY = 1, 2, 3


class VerificationFailed(Exception):
    pass


MATH_ERRORS = (C.CurveError, MetricError, ProjectiveError, MD.ModelError, LCError, E.DomainError)
IO_ERRORS = (OSError, FileFormatError, E.ParseError, E.UnboundVariable, NotSymmetric)


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def resolve(path: str) -> str:
    if path.startswith("@"):
        return str(bundled(path[1:] + ".json"))
    return path


def structure_arg(path: str) -> LCStructure:
    return load_structure(resolve(path))


def floats(text: str, name: str = "value") -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise click.BadParameter(f"{name}: expected comma-separated numbers, got {text!r}") from None


def rationals(text: str, name: str = "value") -> tuple:
    try:
        return tuple(Fraction(v.strip()) for v in text.split(",") if v.strip() != "")
    except (ValueError, ZeroDivisionError):
        raise click.BadParameter(f"{name}: expected comma-separated rationals, got {text!r}") from None


def line_arg(text: str) -> MD.PCLine:
    """'vp_0,...,vp_{n+1}:vm_0,...,vm_{n+1}'."""
    if text.count(":") != 1:
        raise click.BadParameter(f"line must be 'plus:minus', got {text!r}")
    plus, minus = text.split(":")
    return MD.PCLine(rationals(plus, "plus part"), rationals(minus, "minus part"))


def span2(text: str, name: str) -> tuple[float, float]:
    vals = floats(text, name)
    if len(vals) != 2:
        raise click.BadParameter(f"{name}: expected two numbers 'a,b'")
    return float(vals[0]), float(vals[1])


def config(samples, rtol, atol) -> C.IntegratorConfig:
    return C.IntegratorConfig(rel_tol=rtol, abs_tol=atol, samples=samples)


def point_arg(S: LCStructure, text: str) -> np.ndarray:
    q = floats(text, "--at")
    if len(q) != S.dim:
        raise click.BadParameter(f"--at: expected {S.dim} coordinates ({','.join(S.names)})")
    return q


def dir_arg(S: LCStructure, text: str) -> np.ndarray:
    v = floats(text, "--dir")
    if len(v) != S.dim:
        raise click.BadParameter(f"--dir: expected {S.dim} components")
    return v


def emit_trajectories(trajs, fmt: str, output):
    if fmt == "json":
        data = [t.to_dict() for t in trajs]
        write_text(json.dumps(data[0] if len(data) == 1 else data, indent=2) + "\n", output)
        return
    if len(trajs) == 1:
        write_text(trajs[0].to_csv(), output)
        return
    # several curves: prepend a curve index column
    parts = []
    for k, t in enumerate(trajs):
        lines = t.to_csv().splitlines()
        if k == 0:
            parts.append("curve," + lines[0])
        parts.extend(f"{k},{ln}" for ln in lines[1:])
    write_text("\n".join(parts) + "\n", output)


def integration_options(f):
    f = click.option("--samples", default=201, show_default=True, help="output samples")(f)
    f = click.option("--rtol", default=1e-10, show_default=True)(f)
    f = click.option("--atol", default=1e-12, show_default=True)(f)
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)(f)
    f = click.option("-o", "--output", default=None, help="output file (default stdout)")(f)
    return f


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


@click.group()
def cli():
    """Lagrangian contact structures, Fefferman metrics, chains and null-chains."""


@cli.command()
@click.argument("structure")
@click.option("--tol", default=1e-10, show_default=True, help="integrability tolerance")
@click.option("--radius", default=1.0, show_default=True, help="half-width of the sampling box")
def check(structure, tol, radius):
    """Integrability and projectivity report (JSON)."""
    S = structure_arg(structure)
    rep = integrability_report(S, [(-radius, radius)] * S.dim, tol)
    out = {
        "n": S.n,
        "integrable": bool(rep.integrable),
        "symbolic_zero_defect": bool(rep.symbolic_zero),
        "defect_max": rep.max_defect,
        "samples": rep.samples,
    }
    try:
        gamma = christoffels_from_fij(S)
        out["projective"] = True
        out["gamma"] = gamma.to_dict()["gamma"]
    except ProjectiveError as exc:
        out["projective"] = False
        out["projective_reason"] = str(exc)
    click.echo(json.dumps(out, indent=2, sort_keys=True))


@cli.command()
@click.argument("structure")
@click.option("--at", "at", default=None, help="point x..,u,p..[,s]; omit for the symbolic metric")
def metric(structure, at):
    """Fefferman metric (symbolic JSON, or numeric at --at)."""
    S = structure_arg(structure)
    g = build_fefferman(S)
    if at is None:
        click.echo(g.to_json())
        return
    q = floats(at, "--at")
    if len(q) == S.dim:
        q = np.append(q, 0.0)
    if len(q) != g.dim:
        raise click.BadParameter(f"--at: expected {S.dim} or {g.dim} coordinates")
    G = g(q)
    out = {"coords": list(g.coords), "at": q.tolist(), "g": G.tolist(), "signature": list(signature(G))}
    click.echo(json.dumps(out, indent=2))


@cli.command()
@click.argument("structure")
@click.option("--at", "at", required=True, help="initial point x..,u,p..")
@click.option("--dir", "dirs", required=True, multiple=True, help="initial direction (repeatable)")
@click.option("--tspan", default="0,1", show_default=True)
@click.option("--s0", default=0.0, show_default=True, help="fiber coordinate of the lift")
@click.option("--lift", is_flag=True, help="output the geodesic in the Fefferman space")
@integration_options
def chain(structure, at, dirs, tspan, s0, lift, samples, rtol, atol, fmt, output):
    """Chains: projected null geodesics not orthogonal to K."""
    S = structure_arg(structure)
    q = point_arg(S, at)
    cfg = config(samples, rtol, atol)
    trajs = []
    for d in dirs:
        t = C.chain(S, q, dir_arg(S, d), span2(tspan, "--tspan"), cfg, s0=s0)
        trajs.append(t.meta["lift"] if lift else t)
    emit_trajectories(trajs, fmt, output)


@cli.command("null-chain")
@click.argument("structure")
@click.option("--at", "at", required=True)
@click.option("--dir", "direction", required=True, help="null direction in the contact distribution")
@click.option("--k", "ks", multiple=True, type=float, default=(0.0,), show_default=True, help="fiber speed (repeatable)")
@click.option("--tspan", default="0,1", show_default=True)
@click.option("--s0", default=0.0, show_default=True)
@click.option("--lift", is_flag=True)
@integration_options
def null_chain(structure, at, direction, ks, tspan, s0, lift, samples, rtol, atol, fmt, output):
    """Null-chains: projected null geodesics orthogonal to K."""
    S = structure_arg(structure)
    q = point_arg(S, at)
    v = dir_arg(S, direction)
    cfg = config(samples, rtol, atol)
    trajs = []
    for k in ks:
        t = C.null_chain(S, q, v, k, span2(tspan, "--tspan"), cfg, s0=s0)
        if "note" in t.meta:
            click.echo(f"note: {t.meta['note']}", err=True)
        trajs.append(t.meta["lift"] if lift else t)
    emit_trajectories(trajs, fmt, output)


@cli.command()
@click.argument("structure")
@click.option("--at", "at", required=True)
@click.option("--s0", default=0.0, show_default=True)
@click.option("--tspan", default="0,1", show_default=True)
@integration_options
def kflow(structure, at, s0, tspan, samples, rtol, atol, fmt, output):
    """Flow of the null Killing field K (a vertical null geodesic)."""
    S = structure_arg(structure)
    t = C.k_flow(S, point_arg(S, at), s0, span2(tspan, "--tspan"), config(samples, rtol, atol))
    click.echo(f"projection drift: {t.stats['projection_drift']:.3e}", err=True)
    emit_trajectories([t], fmt, output)


@cli.command("kropina-geodesic")
@click.argument("structure")
@click.option("--x-range", "x_range", required=True, help="a,b")
@click.option("--state", default=None, help="initial value mode: y,p,y',p' at x = a")
@click.option("--start", default=None, help="two-point mode: y,p at x = a")
@click.option("--end", default=None, help="two-point mode: y,p at x = b")
@click.option("--guess", default="0,0", show_default=True, help="two-point mode: initial y',p'")
@integration_options
def kropina_geodesic(structure, x_range, state, start, end, guess, samples, rtol, atol, fmt, output):
    """Kropina geodesics for n = 1 (Euler-Lagrange integration)."""
    S = structure_arg(structure)
    if S.n != 1:
        raise click.BadParameter("kropina-geodesic needs an n = 1 structure")
    xr = span2(x_range, "--x-range")
    cfg = config(samples, rtol, atol)
    if state is not None and (start or end):
        raise click.BadParameter("use either --state or --start/--end")
    if state is not None:
        st = floats(state, "--state")
        if len(st) != 4:
            raise click.BadParameter("--state needs y,p,y',p'")
        t = C.kropina_geodesic_dim3(S, xr, st, cfg)
    elif start and end:
        t = C.kropina_two_point(S, xr, span2(start, "--start"), span2(end, "--end"), span2(guess, "--guess"), cfg)
        click.echo(
            f"shooting: {t.stats['shooting_iterations']} iterations, residual {t.stats['shooting_residual']:.3e}",
            err=True,
        )
    else:
        raise click.BadParameter("need --state, or both --start and --end")
    emit_trajectories([t], fmt, output)


@cli.command("project-paths")
@click.argument("structure")
@click.option("--at", "at", required=True)
@click.option("--dir", "direction", required=True, help="transverse direction of the chain")
@click.option("--tspan", default="0,1", show_default=True)
@click.option("--gamma", "gamma_file", default=None, help="Christoffel file (n > 1; default: recovered from f)")
@click.option("--tol", default=1e-6, show_default=True, help="path-equation residual threshold")
@integration_options
def project_paths(structure, at, direction, tspan, gamma_file, tol, samples, rtol, atol, fmt, output):
    """Project a chain to the base and evaluate the path-equation residual.

    Exits with 3 when the residual exceeds --tol (the chain does not project
    to a path).
    """
    S = structure_arg(structure)
    t = C.chain(S, point_arg(S, at), dir_arg(S, direction), span2(tspan, "--tspan"), config(samples, rtol, atol))
    gamma = load_christoffel(resolve(gamma_file)) if gamma_file else None
    proj = C.project_to_paths(S, t, gamma)
    if fmt == "json":
        data = {"coords": list(proj.coords), "t": t.t.tolist(), "points": proj.points.tolist(),
                "residuals": proj.residuals.tolist(), "max_residual": proj.max_residual}
        write_text(json.dumps(data, indent=2) + "\n", output)
    else:
        lines = [",".join(["t", *proj.coords, "residual"])]
        for tt, p, r in zip(t.t, proj.points, proj.residuals):
            lines.append(",".join(repr(float(v)) for v in (tt, *p, r)))
        write_text("\n".join(lines) + "\n", output)
    click.echo(f"max path residual: {proj.max_residual:.3e}", err=True)
    if proj.max_residual > tol:
        raise VerificationFailed(f"path residual {proj.max_residual:.3e} exceeds {tol:g}")


@cli.command("verify-example")
@click.option("--json", "as_json", is_flag=True, help="machine-readable report")
@click.option("--structure", default=None, help="override the defining function (n = 1 file)")
def verify_example_cmd(as_json, structure):
    """Reproduce the worked example f = (p + e^{-2x} p^3)/2 end to end."""
    S = structure_arg(structure) if structure else None
    rep = verify_example(S)
    click.echo(rep.to_json() if as_json else rep.summary())
    if not rep.passed:
        raise VerificationFailed("failing checks: " + ",".join(map(str, rep.failed_ids)))


@cli.command("pw-compare")
@click.argument("christoffel")
@click.option("--points", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--tol", default=1e-10, show_default=True)
def pw_compare(christoffel, points, seed, tol):
    """Patterson-Walker pullback versus the projective Fefferman metric."""
    gamma = load_christoffel(resolve(christoffel))
    rep = pw_comparison(gamma, points, seed)
    rep["factor"] = "-y_{n+1} = -branch*exp(-2s)"
    click.echo(json.dumps(rep, indent=2, sort_keys=True))
    worst = max(v for k, v in rep.items() if k.endswith("error"))
    if worst > tol:
        raise VerificationFailed(f"max error {worst:.3e} exceeds {tol:g}")


@cli.command("classify")
@click.argument("structure")
@click.option("--at", "at", required=True)
@click.option("--dir", "direction", required=True)
def classify_cmd(structure, at, direction):
    """Classify a tangent vector of M relative to E, F and the contact distribution."""
    S = structure_arg(structure)
    click.echo(classify_point_vector(S, point_arg(S, at), dir_arg(S, direction)))


# ---------------------------------------------------------------------------
# model subcommands
# ---------------------------------------------------------------------------


@cli.group()
def model():
    """Exact computations in the homogeneous model.

    Lines are written 'vp_0,...,vp_{n+1}:vm_0,...,vm_{n+1}' with rational
    entries; tangent vectors by their blocks --X, --Y (n entries) and --z.
    """


def tangent_options(f):
    f = click.option("--line", "line", default=None, help="base line (default: the origin)")(f)
    f = click.option("--n", "n", type=int, default=None, help="model size when the base is the origin")(f)
    f = click.option("--X", "X", required=True)(f)
    f = click.option("--Y", "Y", required=True)(f)
    f = click.option("--z", "z", default="0", show_default=True)(f)
    return f


def tangent_from(line, n, X, Y, z) -> MD.ModelTangent:
    Xv, Yv = rationals(X, "--X"), rationals(Y, "--Y")
    if line is None:
        base = MD.origin(n if n is not None else len(Xv))
    else:
        base = line_arg(line)
    return MD.ModelTangent(base, Xv, Yv, Fraction(z))


def curve_options(f):
    f = click.option("--trange", default="0,1", show_default=True, help="rational t0,t1")(f)
    f = click.option("--samples", default=11, show_default=True)(f)
    f = click.option("--float", "as_float", is_flag=True, help="write floats instead of exact rationals")(f)
    f = click.option("-o", "--output", default=None)(f)
    return f


def sample_ts(trange, samples):
    t0, t1 = rationals(trange, "--trange")
    if samples < 2:
        raise click.BadParameter("--samples must be at least 2")
    return [t0 + (t1 - t0) * Fraction(k, samples - 1) for k in range(samples)]


@model.command("classify")
@tangent_options
def model_classify(line, n, X, Y, z):
    click.echo(MD.classify_tangent(tangent_from(line, n, X, Y, z)))


@model.command("chain")
@tangent_options
@curve_options
def model_chain_cmd(line, n, X, Y, z, trange, samples, as_float, output):
    w = tangent_from(line, n, X, Y, z)
    curve = MD.model_chain(w.base, w)
    write_text(curve.to_csv(sample_ts(trange, samples), exact=not as_float), output)


@model.command("null-chain")
@tangent_options
@click.option("--a", "a", default="0", show_default=True)
@click.option("--b", "b", default="0", show_default=True)
@curve_options
def model_null_chain_cmd(line, n, X, Y, z, a, b, trange, samples, as_float, output):
    w = tangent_from(line, n, X, Y, z)
    curve = MD.model_null_chain(w.base, w, Fraction(a), Fraction(b))
    write_text(curve.to_csv(sample_ts(trange, samples), exact=not as_float), output)


@model.command("connect")
@click.argument("line1")
@click.argument("line2")
@click.option("--samples", default=5, show_default=True, help="samples per arc/member")
@click.option("--ratio", default="1", show_default=True, help="member of a null-chain family")
def model_connect(line1, line2, samples, ratio):
    """Decide how two lines are connected; sample the connecting curves."""
    L1, L2 = line_arg(line1), line_arg(line2)
    res = MD.connect(L1, L2)
    ts = sample_ts("0,1", samples)
    out = {"kind": res.kind, "detail": res.detail}
    fmt = lambda rows: [[str(t), [str(v) for v in p], [str(v) for v in m]] for t, p, m in rows]
    if res.kind == "chain":
        out["arcs"] = {arc.label: fmt(arc.sample(ts)) for arc in res.arcs}
    elif res.kind == "null_chain_family":
        out["member"] = {"ratio": ratio, "samples": fmt(res.member(Fraction(ratio)).sample(ts))}
    click.echo(json.dumps(out, indent=2))


# ---------------------------------------------------------------------------


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="lcgeom", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(EXIT_IO)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(EXIT_IO)
    except VerificationFailed as exc:
        click.echo(f"verification failed: {exc}", err=True)
        sys.exit(EXIT_VERIFY)
    except IO_ERRORS as exc:
        click.echo(f"error ({type(exc).__name__}): {exc}", err=True)
        sys.exit(EXIT_IO)
    except MATH_ERRORS as exc:
        click.echo(f"error ({type(exc).__name__}): {exc}", err=True)
        sys.exit(EXIT_MATH)
    except ValueError as exc:
        click.echo(f"error ({type(exc).__name__}): {exc}", err=True)
        sys.exit(EXIT_IO)
    sys.exit(0)


if __name__ == "__main__":
    main()
