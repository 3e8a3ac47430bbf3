"""Time the compiled recurrence kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--steps 40] [--batch 32] [--hidden 120]
"""

import argparse
import timeit

import numpy as np

from aeroslosh import _recurrence_py

try:
    from aeroslosh import _recurrence as compiled
except ImportError:
    compiled = None


def bench(impl, T, B, H, repeat):
    rng = np.random.default_rng(0)
    P = rng.normal(size=(T, B, H))
    Ws = rng.normal(size=(H, H)) / np.sqrt(H)
    G = rng.normal(size=(T, B, H))
    S = impl.relu_forward(P, Ws)
    fwd = min(timeit.repeat(lambda: impl.relu_forward(P, Ws), number=20, repeat=repeat)) / 20
    bwd = min(timeit.repeat(lambda: impl.relu_backward(G, S, Ws), number=20, repeat=repeat)) / 20
    return fwd, bwd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--hidden", type=int, nargs="+", default=[15, 80, 120, 170])
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    print(f"{'hidden':>6} {'impl':>8} {'forward us':>11} {'backward us':>12}")
    for H in a.hidden:
        rows = [("python", _recurrence_py)] + ([("compiled", compiled)] if compiled else [])
        base = None
        for name, impl in rows:
            f, b = bench(impl, a.steps, a.batch, H, a.repeat)
            extra = "" if base is None else f"  x{base[0] / f:.1f} / x{base[1] / b:.1f}"
            base = base or (f, b)
            print(f"{H:>6} {name:>8} {f * 1e6:>11.1f} {b * 1e6:>12.1f}{extra}")
    if compiled is None:
        print("compiled kernels not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
