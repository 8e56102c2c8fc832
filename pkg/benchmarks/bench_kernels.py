"""Timing of the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from lcgeom import expr as E
from lcgeom import kernels
from lcgeom._program import compile_programs
from lcgeom.curves import IntegratorConfig, chain
from lcgeom.lc_core import example_structure


def cases():
    names = ["t", "y1", "y2"]
    osc = compile_programs([E.parse("y2", names), E.parse("-sin(y1) - 0.1*y2", names)], names)
    x = np.array([0.3, 0.5, -0.2])
    ts = np.linspace(0, 10, 101)
    S = example_structure()
    cfg = IntegratorConfig(samples=101)
    return {
        "eval_programs": lambda b: kernels.eval_programs(osc, x, backend=b),
        "dopri pendulum": lambda b: kernels.dopri(0, osc, None, [0.5, 0.0], ts, 1e-10, 1e-12, backend=b),
        "example chain": lambda b: chain(S, [0, 0, 1], [1, 0.5, 0.2], (0, 1), cfg, backend=b),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled core not built; timing the fallback only")
    print(f"{'case':<18}" + "".join(f"{b:>14}" for b in backends) + ("       speedup" if len(backends) == 2 else ""))
    for name, fn in cases().items():
        times = []
        for b in backends:
            fn(b)
            number = 1000 if name == "eval_programs" else 3
            times.append(min(timeit.repeat(lambda: fn(b), number=number, repeat=args.repeat)) / number)
        row = f"{name:<18}" + "".join(f"{t * 1e3:>12.4f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>13.1f}x"
        print(row)


if __name__ == "__main__":
    main()
