"""Compile expressions to a flat postfix bytecode shared by both backends.

A :class:`ProgramSet` packs several programs over one variable vector.  Each
instruction is an ``(opcode, argument)`` pair; the argument is a variable
index, a constant, or an exponent depending on the opcode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as E

CONST, VAR, NEG, ADD, SUB, MUL, DIV, POWI, POWF = range(9)
EXP, LN, SQRT, SIN, COS, SINH, COSH, TANH = range(9, 17)

OPNAMES = [
    "CONST", "VAR", "NEG", "ADD", "SUB", "MUL", "DIV", "POWI", "POWF",
    "EXP", "LN", "SQRT", "SIN", "COS", "SINH", "COSH", "TANH",
]
_CALL_OPS = {
    "exp": EXP, "ln": LN, "sqrt": SQRT, "sin": SIN,
    "cos": COS, "sinh": SINH, "cosh": COSH, "tanh": TANH,
}
_BIN_OPS = {E.Add: ADD, E.Sub: SUB, E.Mul: MUL, E.Div: DIV}


def _emit(e: E.Expression, index: dict[str, int], ops: list, args: list) -> int:
    """Append postfix code for ``e``; return the stack depth it needs."""
    if isinstance(e, E.Const):
        ops.append(CONST)
        args.append(float(e.value))
        return 1
    if isinstance(e, E.Var):
        if e.name not in index:
            raise E.UnboundVariable(e.name)
        ops.append(VAR)
        args.append(float(index[e.name]))
        return 1
    if isinstance(e, E.Neg):
        d = _emit(e.arg, index, ops, args)
        ops.append(NEG)
        args.append(0.0)
        return d
    if isinstance(e, E.Call):
        d = _emit(e.arg, index, ops, args)
        ops.append(_CALL_OPS[e.fn])
        args.append(0.0)
        return d
    if isinstance(e, E.Pow):
        d = _emit(e.base, index, ops, args)
        r = e.exponent
        ops.append(POWI if r.denominator == 1 else POWF)
        args.append(float(r))
        return d
    dl = _emit(e.left, index, ops, args)
    dr = _emit(e.right, index, ops, args)
    ops.append(_BIN_OPS[type(e)])
    args.append(0.0)
    return max(dl, dr + 1)


@dataclass
class ProgramSet:
    """Several compiled programs sharing the ordered variable list ``names``."""

    names: tuple
    ops: np.ndarray
    args: np.ndarray
    starts: np.ndarray
    depth: int
    _py: object = field(default=None, repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.starts) - 1

    @property
    def nvars(self) -> int:
        return len(self.names)

    def python_function(self):
        """Pure-Python evaluator ``fn(x, out)`` generated from the bytecode."""
        if self._py is None:
            from ._fallback import build_python_evaluator

            self._py = build_python_evaluator(self)
        return self._py


def compile_programs(exprs: Sequence[E.Expression], names: Sequence[str]) -> ProgramSet:
    index = {n: i for i, n in enumerate(names)}
    ops: list[int] = []
    args: list[float] = []
    starts = [0]
    depth = 1
    for e in exprs:
        depth = max(depth, _emit(e, index, ops, args))
        starts.append(len(ops))
    return ProgramSet(
        names=tuple(names),
        ops=np.asarray(ops, dtype=np.int32),
        args=np.asarray(args, dtype=np.float64),
        starts=np.asarray(starts, dtype=np.int64),
        depth=depth,
    )


def disassemble(ps: ProgramSet, k: int) -> list[str]:
    lo, hi = int(ps.starts[k]), int(ps.starts[k + 1])
    out = []
    for op, a in zip(ps.ops[lo:hi], ps.args[lo:hi]):
        name = OPNAMES[op]
        if op == VAR:
            out.append(f"{name} {ps.names[int(a)]}")
        elif op in (CONST, POWI, POWF):
            out.append(f"{name} {a!r}")
        else:
            out.append(name)
    return out
