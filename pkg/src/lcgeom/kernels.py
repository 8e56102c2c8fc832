"""Backend selection for the numerical kernels.

The compiled core is used when it was built; otherwise, or when the
environment variable ``LCGEOM_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the pure-Python implementation is used.  Both expose
``eval_programs(ps, x, out)`` and ``dopri(mode, a, b, y0, t_eval, rtol, atol,
h0, max_steps)``.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

STATUS = {
    0: "ok",
    1: "max_steps exceeded",
    2: "domain error in coefficient evaluation",
    3: "singular metric",
    4: "step size underflow",
    5: "non-finite state",
}


def _load():
    if os.environ.get("LCGEOM_PURE_PYTHON", "") not in ("", "0"):
        return _fallback, "python"
    try:
        from . import _kernels
    except ImportError:
        return _fallback, "python"
    return _kernels, "cython"


_impl, BACKEND = _load()


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def eval_programs(ps, x, out=None, backend=None):
    """Evaluate a program set at ``x``; returns (values, status)."""
    impl = get_backend(backend)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if out is None:
        out = np.empty(ps.size, dtype=np.float64)
    status = impl.eval_programs(ps, x, out)
    return out, int(status)


def dopri(mode, prog_a, prog_b, y0, t_eval, rtol, atol, h0=0.0, max_steps=100000, backend=None):
    impl = get_backend(backend)
    out, filled, status, stats = impl.dopri(
        int(mode), prog_a, prog_b, np.asarray(y0, dtype=np.float64),
        np.asarray(t_eval, dtype=np.float64), float(rtol), float(atol), float(h0), int(max_steps),
    )
    return np.asarray(out), int(filled), int(status), dict(stats)
