# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled core: bytecode evaluation and Dormand-Prince integration."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, sin, cos, sinh, cosh, tanh, pow, fabs, isinf, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    OK = 0
    MAX_STEPS = 1
    DOMAIN = 2
    SINGULAR = 3
    STEP_UNDERFLOW = 4


cdef struct Prog:
    const int* ops
    const double* args
    const long long* starts
    Py_ssize_t size
    double* stack


cdef int run_set(Prog* p, const double* x, double* out) noexcept nogil:
    """Evaluate every program; 0 on success, k+1 on a domain error in program k."""
    cdef Py_ssize_t k, i, sp
    cdef int op
    cdef double a, b, r
    cdef double* st = p.stack
    for k in range(p.size):
        sp = 0
        for i in range(p.starts[k], p.starts[k + 1]):
            op = p.ops[i]
            if op == 0:
                st[sp] = p.args[i]
                sp += 1
            elif op == 1:
                st[sp] = x[<Py_ssize_t>p.args[i]]
                sp += 1
            elif op == 2:
                st[sp - 1] = -st[sp - 1]
            elif op <= 6:
                b = st[sp - 1]
                a = st[sp - 2]
                sp -= 1
                if op == 3:
                    st[sp - 1] = a + b
                elif op == 4:
                    st[sp - 1] = a - b
                elif op == 5:
                    st[sp - 1] = a * b
                else:
                    if b == 0.0:
                        return <int>k + 1
                    st[sp - 1] = a / b
            elif op == 7:
                a = st[sp - 1]
                if a == 0.0 and p.args[i] < 0.0:
                    return <int>k + 1
                r = pow(a, p.args[i])
                if isinf(r):
                    return <int>k + 1
                st[sp - 1] = r
            elif op == 8:
                a = st[sp - 1]
                if a < 0.0 or (a == 0.0 and p.args[i] < 0.0):
                    return <int>k + 1
                r = pow(a, p.args[i])
                if isinf(r):
                    return <int>k + 1
                st[sp - 1] = r
            else:
                a = st[sp - 1]
                if op == 9:
                    r = exp(a)
                    if isinf(r):
                        return <int>k + 1
                elif op == 10:
                    if a <= 0.0:
                        return <int>k + 1
                    r = log(a)
                elif op == 11:
                    if a < 0.0:
                        return <int>k + 1
                    r = sqrt(a)
                elif op == 12:
                    r = sin(a)
                elif op == 13:
                    r = cos(a)
                elif op == 14:
                    r = sinh(a)
                    if isinf(r):
                        return <int>k + 1
                elif op == 15:
                    r = cosh(a)
                    if isinf(r):
                        return <int>k + 1
                else:
                    r = tanh(a)
                st[sp - 1] = r
        out[k] = st[0]
    return 0


cdef class _ProgHolder:
    """Keeps the numpy buffers of a program set alive and exposes a Prog."""
    cdef Prog prog
    cdef object _ops, _args, _starts
    cdef double* _stack

    def __cinit__(self, ps):
        cdef cnp.ndarray[cnp.int32_t, ndim=1] ops = np.ascontiguousarray(ps.ops, dtype=np.int32)
        cdef cnp.ndarray[cnp.float64_t, ndim=1] args = np.ascontiguousarray(ps.args, dtype=np.float64)
        cdef cnp.ndarray[cnp.int64_t, ndim=1] starts = np.ascontiguousarray(ps.starts, dtype=np.int64)
        self._ops, self._args, self._starts = ops, args, starts
        self._stack = <double*>malloc((ps.depth + 1) * sizeof(double))
        if self._stack == NULL:
            raise MemoryError()
        self.prog.ops = <const int*>(cnp.PyArray_DATA(ops)) if ops.shape[0] else NULL
        self.prog.args = <const double*>(cnp.PyArray_DATA(args)) if args.shape[0] else NULL
        self.prog.starts = <const long long*>cnp.PyArray_DATA(starts)
        self.prog.size = starts.shape[0] - 1
        self.prog.stack = self._stack

    def __dealloc__(self):
        if self._stack != NULL:
            free(self._stack)


def eval_programs(ps, double[::1] x, double[::1] out):
    cdef _ProgHolder h = _ProgHolder(ps)
    if out.shape[0] < h.prog.size:
        raise ValueError("output buffer too small")
    return run_set(&h.prog, &x[0] if x.shape[0] else NULL, &out[0] if out.shape[0] else NULL)


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------

cdef struct Rhs:
    int mode
    Py_ssize_t n
    Prog* pa
    Prog* pb
    double* work      # t followed by state (mode 0), or g (d*d) then dg (d^3)
    double* mat       # d*d scratch for elimination
    double* vec       # d scratch


cdef int solve(double* a, double* b, Py_ssize_t n) noexcept nogil:
    """In-place pivoted elimination; solution left in b.  1 if singular."""
    cdef Py_ssize_t c, r, j, piv
    cdef double scale = 0.0, m, s, tmp, inv
    for r in range(n * n):
        if fabs(a[r]) > scale:
            scale = fabs(a[r])
    if scale == 0.0:
        return 1
    for c in range(n):
        piv = c
        for r in range(c + 1, n):
            if fabs(a[r * n + c]) > fabs(a[piv * n + c]):
                piv = r
        if fabs(a[piv * n + c]) <= 1e-14 * scale:
            return 1
        if piv != c:
            for j in range(n):
                tmp = a[c * n + j]
                a[c * n + j] = a[piv * n + j]
                a[piv * n + j] = tmp
            tmp = b[c]
            b[c] = b[piv]
            b[piv] = tmp
        inv = 1.0 / a[c * n + c]
        for r in range(c + 1, n):
            m = a[r * n + c] * inv
            if m != 0.0:
                for j in range(c, n):
                    a[r * n + j] -= m * a[c * n + j]
                b[r] -= m * b[c]
    for r in range(n - 1, -1, -1):
        s = b[r]
        for j in range(r + 1, n):
            s -= a[r * n + j] * b[j]
        b[r] = s / a[r * n + r]
    return 0


cdef int eval_rhs(Rhs* R, double t, const double* y, double* dy) noexcept nogil:
    cdef Py_ssize_t i, j, l, d, n = R.n
    cdef double s, vi
    cdef double* g
    cdef double* dg
    if R.mode == 0:
        R.work[0] = t
        for i in range(n):
            R.work[i + 1] = y[i]
        if run_set(R.pa, R.work, dy):
            return DOMAIN
        return OK
    d = n // 2
    g = R.work
    dg = R.work + d * d
    if run_set(R.pa, y, g) or run_set(R.pb, y, dg):
        return DOMAIN
    for l in range(d):
        s = 0.0
        for i in range(d):
            vi = y[d + i]
            if vi == 0.0:
                continue
            for j in range(d):
                s += (dg[i * d * d + j * d + l] - 0.5 * dg[l * d * d + i * d + j]) * vi * y[d + j]
        R.vec[l] = -s
    for i in range(d * d):
        R.mat[i] = g[i]
    if solve(R.mat, R.vec, d):
        return SINGULAR
    for i in range(d):
        dy[i] = y[d + i]
        dy[d + i] = R.vec[i]
    return OK


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)
# ---------------------------------------------------------------------------

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef double initial_step(Rhs* R, double t0, double* y0, double* f0, double direction,
                         double rtol, double atol, double* tmp, double* f1) noexcept nogil:
    cdef Py_ssize_t i, n = R.n
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, sc, h0, h1
    for i in range(n):
        sc = atol + rtol * fabs(y0[i])
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = sqrt(d0 / n)
    d1 = sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    for i in range(n):
        tmp[i] = y0[i] + direction * h0 * f0[i]
    if eval_rhs(R, t0 + direction * h0, tmp, f1):
        return h0
    for i in range(n):
        sc = atol + rtol * fabs(y0[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = sqrt(d2 / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = 1e-6 if 1e-6 > h0 * 1e-3 else h0 * 1e-3
    else:
        h1 = pow(0.01 / (d1 if d1 > d2 else d2), 0.2)
    return h1 if h1 < 100 * h0 else 100 * h0


def dopri(int mode, prog_a, prog_b, y0, t_eval, double rtol, double atol, double h0, long max_steps):
    """Integrate and return (samples, filled, status, stats)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] te = np.ascontiguousarray(t_eval, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yv = np.array(y0, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0], m = te.shape[0], i, nxt, d
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.full((m, n), np.nan)
    cdef _ProgHolder ha = _ProgHolder(prog_a)
    cdef _ProgHolder hb = _ProgHolder(prog_b) if prog_b is not None else None
    cdef Rhs R
    cdef long steps = 0, rejected = 0, nfev = 0
    cdef double max_err = 0.0, t, h, hs, target, direction, err, acc, e, sc, fac
    cdef bint hit, finite
    cdef int st = OK
    cdef double* buf
    cdef double *y, *ynew, *yy, *k1, *k2, *k3, *k4, *k5, *k6, *k7, *swap

    R.mode = mode
    R.n = n
    R.pa = &ha.prog
    R.pb = &hb.prog if hb is not None else NULL
    d = n // 2
    buf = <double*>malloc((11 * n + n + 1 + d * d + d * d * d + d * d + d + 8) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    y = buf
    ynew = y + n
    yy = ynew + n
    k1 = yy + n
    k2 = k1 + n
    k3 = k2 + n
    k4 = k3 + n
    k5 = k4 + n
    k6 = k5 + n
    k7 = k6 + n
    R.work = k7 + n + n
    R.mat = R.work + (n + 1 if mode == 0 else d * d + d * d * d)
    R.vec = R.mat + d * d

    stats = {"steps": 0, "rejected": 0, "nfev": 0, "max_error": 0.0}
    try:
        for i in range(n):
            y[i] = yv[i]
            out[0, i] = y[i]
        t = te[0]
        nxt = 1
        if m == 1:
            return out, 1, OK, stats
        direction = 1.0 if te[m - 1] >= te[0] else -1.0
        with nogil:
            st = eval_rhs(&R, t, y, k1)
            nfev += 1
            if st == OK:
                if h0 > 0:
                    h = h0
                else:
                    h = initial_step(&R, t, y, k1, direction, rtol, atol, yy, k2)
                nfev += 1
                nxt = 1
                while nxt < m:
                    if steps + rejected >= max_steps:
                        st = MAX_STEPS
                        break
                    target = te[nxt]
                    hit = False
                    if h >= fabs(target - t):
                        h = fabs(target - t)
                        hit = True
                    if h <= 1e-14 * (fabs(t) if fabs(t) > 1.0 else 1.0):
                        st = STEP_UNDERFLOW
                        break
                    hs = direction * h
                    for i in range(n):
                        yy[i] = y[i] + hs * A21 * k1[i]
                    st = eval_rhs(&R, t + C2 * hs, yy, k2)
                    if st == OK:
                        for i in range(n):
                            yy[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
                        st = eval_rhs(&R, t + C3 * hs, yy, k3)
                    if st == OK:
                        for i in range(n):
                            yy[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
                        st = eval_rhs(&R, t + C4 * hs, yy, k4)
                    if st == OK:
                        for i in range(n):
                            yy[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                        st = eval_rhs(&R, t + C5 * hs, yy, k5)
                    if st == OK:
                        for i in range(n):
                            yy[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
                        st = eval_rhs(&R, t + hs, yy, k6)
                    if st == OK:
                        for i in range(n):
                            ynew[i] = y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
                        st = eval_rhs(&R, t + hs, ynew, k7)
                    nfev += 6
                    if st != OK:
                        rejected += 1
                        h *= 0.25
                        if h <= 1e-14 * (fabs(t) if fabs(t) > 1.0 else 1.0):
                            break
                        st = OK
                        continue
                    acc = 0.0
                    finite = True
                    for i in range(n):
                        e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
                        sc = atol + rtol * (fabs(y[i]) if fabs(y[i]) > fabs(ynew[i]) else fabs(ynew[i]))
                        acc += (e / sc) ** 2
                        if not isfinite(ynew[i]):
                            finite = False
                    if not finite or not isfinite(acc):
                        rejected += 1
                        h *= 0.25
                        continue
                    err = sqrt(acc / n)
                    if err <= 1.0:
                        steps += 1
                        if err > max_err:
                            max_err = err
                        t = target if hit else t + hs
                        swap = y
                        y = ynew
                        ynew = swap
                        swap = k1
                        k1 = k7
                        k7 = swap
                        if hit:
                            for i in range(n):
                                out[nxt, i] = y[i]
                            nxt += 1
                        if err == 0.0:
                            fac = 5.0
                        else:
                            fac = 0.9 * pow(err, -0.2)
                            fac = 5.0 if fac > 5.0 else (0.2 if fac < 0.2 else fac)
                        h = h * fac
                    else:
                        rejected += 1
                        fac = 0.9 * pow(err, -0.2)
                        h = h * (0.2 if fac < 0.2 else fac)
        stats["steps"] = steps
        stats["rejected"] = rejected
        stats["nfev"] = nfev
        stats["max_error"] = max_err
        if st != OK:
            return out, (nxt if m > 1 else 1), st, stats
        return out, m, OK, stats
    finally:
        free(buf)
