"""Pure-Python implementation of the numerical kernels.

Programs are translated from bytecode into straight-line Python functions, so
the fallback and the compiled core execute the same arithmetic in the same
order.  The integrator mirrors ``_kernels.pyx`` line for line.
"""

from __future__ import annotations

import math

import numpy as np

from . import _program as P

OK, MAX_STEPS, DOMAIN, SINGULAR, STEP_UNDERFLOW, NONFINITE = range(6)


class _Domain(Exception):
    pass


def _powi(b, k):
    r = b**k
    if math.isinf(r):
        raise _Domain
    return r


def _powf(b, r):
    if b < 0.0 or (b == 0.0 and r < 0.0):
        raise _Domain
    v = b**r
    if math.isinf(v):
        raise _Domain
    return v


def _ln(a):
    if a <= 0.0:
        raise _Domain
    return math.log(a)


_UNARY = {
    P.NEG: "-{}",
    P.EXP: "_exp({})",
    P.LN: "_ln({})",
    P.SQRT: "_sqrt({})",
    P.SIN: "_sin({})",
    P.COS: "_cos({})",
    P.SINH: "_sinh({})",
    P.COSH: "_cosh({})",
    P.TANH: "_tanh({})",
}
_BINARY = {P.ADD: "+", P.SUB: "-", P.MUL: "*", P.DIV: "/"}


def build_python_evaluator(ps):
    """Generate ``fn(x, out) -> status`` (0 ok, k+1 domain error in program k)."""
    lines = ["def _fn(x, out):", "    k = 0", "    try:"]
    tmp = 0
    for k in range(ps.size):
        lo, hi = int(ps.starts[k]), int(ps.starts[k + 1])
        stack: list[str] = []
        lines.append(f"        k = {k}")
        for op, a in zip(ps.ops[lo:hi].tolist(), ps.args[lo:hi].tolist()):
            if op == P.CONST:
                expr = repr(a)
            elif op == P.VAR:
                expr = f"x[{int(a)}]"
            elif op in _UNARY:
                expr = _UNARY[op].format(stack.pop())
            elif op in _BINARY:
                r = stack.pop()
                l = stack.pop()
                expr = f"{l} {_BINARY[op]} {r}"
            elif op == P.POWI:
                expr = f"_powi({stack.pop()}, {float(a)!r})"
            elif op == P.POWF:
                expr = f"_powf({stack.pop()}, {a!r})"
            else:
                raise ValueError(f"bad opcode {op}")
            name = f"t{tmp}"
            tmp += 1
            lines.append(f"        {name} = {expr}")
            stack.append(name)
        lines.append(f"        out[{k}] = {stack.pop()}")
    lines += [
        "    except (ZeroDivisionError, ValueError, OverflowError, _Domain):",
        "        return k + 1",
        "    return 0",
    ]
    namespace = {
        "_Domain": _Domain,
        "_powi": _powi,
        "_powf": _powf,
        "_ln": _ln,
        "_exp": math.exp,
        "_sqrt": math.sqrt,
        "_sin": math.sin,
        "_cos": math.cos,
        "_sinh": math.sinh,
        "_cosh": math.cosh,
        "_tanh": math.tanh,
    }
    exec("\n".join(lines), namespace)
    return namespace["_fn"]


def eval_programs(ps, x, out) -> int:
    buf = [0.0] * ps.size
    status = ps.python_function()(list(map(float, x)), buf)
    out[: ps.size] = buf
    return status


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------


def _solve(a, b):
    """Gaussian elimination with partial pivoting; ``None`` if singular."""
    n = len(b)
    a = [row[:] for row in a]
    b = b[:]
    scale = max(max(abs(v) for v in row) for row in a) if n else 0.0
    if scale == 0.0:
        return None
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(a[r][c]))
        if abs(a[piv][c]) <= 1e-14 * scale:
            return None
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            b[c], b[piv] = b[piv], b[c]
        inv = 1.0 / a[c][c]
        for r in range(c + 1, n):
            m = a[r][c] * inv
            if m != 0.0:
                row_r, row_c = a[r], a[c]
                for j in range(c, n):
                    row_r[j] -= m * row_c[j]
                b[r] -= m * b[c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        s = b[r]
        for j in range(r + 1, n):
            s -= a[r][j] * x[j]
        x[r] = s / a[r][r]
    return x


class _Rhs:
    def __init__(self, mode, prog_a, prog_b, n):
        self.mode = mode
        self.n = n
        self.fa = prog_a.python_function()
        self.fb = prog_b.python_function() if prog_b is not None else None
        self.bufa = [0.0] * prog_a.size
        self.bufb = [0.0] * (prog_b.size if prog_b is not None else 0)

    def __call__(self, t, y):
        """Return (status, dy)."""
        if self.mode == 0:
            st = self.fa([t] + y, self.bufa)
            if st:
                return DOMAIN, None
            return OK, self.bufa[:]
        d = self.n // 2
        x = y[:d]
        v = y[d:]
        if self.fa(x, self.bufa) or self.fb(x, self.bufb):
            return DOMAIN, None
        g = [self.bufa[i * d : (i + 1) * d] for i in range(d)]
        dg = self.bufb
        b = [0.0] * d
        for l in range(d):
            s = 0.0
            for i in range(d):
                vi = v[i]
                if vi == 0.0:
                    continue
                for j in range(d):
                    s += (dg[i * d * d + j * d + l] - 0.5 * dg[l * d * d + i * d + j]) * vi * v[j]
            b[l] = -s
        acc = _solve(g, b)
        if acc is None:
            return SINGULAR, None
        return OK, v + acc


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)
# ---------------------------------------------------------------------------

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40


def _initial_step(rhs, t0, y0, f0, direction, rtol, atol):
    n = len(y0)
    sc = [atol + rtol * abs(v) for v in y0]
    d0 = math.sqrt(sum((y0[i] / sc[i]) ** 2 for i in range(n)) / n)
    d1 = math.sqrt(sum((f0[i] / sc[i]) ** 2 for i in range(n)) / n)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = [y0[i] + direction * h0 * f0[i] for i in range(n)]
    st, f1 = rhs(t0 + direction * h0, y1)
    if st:
        return h0
    d2 = math.sqrt(sum(((f1[i] - f0[i]) / sc[i]) ** 2 for i in range(n)) / n) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def dopri(mode, prog_a, prog_b, y0, t_eval, rtol, atol, h0, max_steps):
    """Integrate and return (samples, filled, status, stats)."""
    n = len(y0)
    t_eval = np.asarray(t_eval, dtype=np.float64)
    m = len(t_eval)
    out = np.full((m, n), np.nan)
    stats = {"steps": 0, "rejected": 0, "nfev": 0, "max_error": 0.0}
    rhs = _Rhs(mode, prog_a, prog_b, n)
    y = [float(v) for v in y0]
    t = float(t_eval[0])
    out[0] = y
    if m == 1:
        return out, 1, OK, stats
    direction = 1.0 if t_eval[-1] >= t_eval[0] else -1.0
    st, k1 = rhs(t, y)
    stats["nfev"] += 1
    if st:
        return out, 1, st, stats
    h = h0 if h0 > 0 else _initial_step(rhs, t, y, k1, direction, rtol, atol)
    stats["nfev"] += 1
    nxt = 1
    while nxt < m:
        if stats["steps"] + stats["rejected"] >= max_steps:
            return out, nxt, MAX_STEPS, stats
        target = float(t_eval[nxt])
        hit = False
        if h >= abs(target - t):
            h = abs(target - t)
            hit = True
        if h <= 1e-14 * max(1.0, abs(t)):
            return out, nxt, STEP_UNDERFLOW, stats
        hs = direction * h
        yy = [y[i] + hs * A21 * k1[i] for i in range(n)]
        st, k2 = rhs(t + C2 * hs, yy)
        if st == OK:
            yy = [y[i] + hs * (A31 * k1[i] + A32 * k2[i]) for i in range(n)]
            st, k3 = rhs(t + C3 * hs, yy)
        if st == OK:
            yy = [y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in range(n)]
            st, k4 = rhs(t + C4 * hs, yy)
        if st == OK:
            yy = [y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]) for i in range(n)]
            st, k5 = rhs(t + C5 * hs, yy)
        if st == OK:
            yy = [
                y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
                for i in range(n)
            ]
            st, k6 = rhs(t + hs, yy)
        if st == OK:
            ynew = [
                y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
                for i in range(n)
            ]
            st, k7 = rhs(t + hs, ynew)
        stats["nfev"] += 6
        if st != OK:
            # treat as a failed step: shrink and retry
            stats["rejected"] += 1
            h *= 0.25
            if h <= 1e-14 * max(1.0, abs(t)):
                return out, nxt, st, stats
            continue
        acc = 0.0
        finite = True
        for i in range(n):
            e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            acc += (e / sc) ** 2
            if not math.isfinite(ynew[i]):
                finite = False
        if not finite or not math.isfinite(acc):
            stats["rejected"] += 1
            h *= 0.25
            continue
        err = math.sqrt(acc / n)
        if err <= 1.0:
            stats["steps"] += 1
            stats["max_error"] = max(stats["max_error"], err)
            t = target if hit else t + hs
            y = ynew
            k1 = k7
            if hit:
                out[nxt] = y
                nxt += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = h * fac
        else:
            stats["rejected"] += 1
            h = h * max(0.2, 0.9 * err ** -0.2)
    return out, m, OK, stats
