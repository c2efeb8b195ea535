"""Compare the compiled kernels against the numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is timed on identical inputs with both backends; outputs are
checked for agreement before timing.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from lgboed import backend


def random_system(rng: np.random.Generator, n: int, s: int):
    A = rng.standard_normal((n, n))
    A *= 0.95 / max(abs(np.linalg.eigvals(A)))
    H = rng.standard_normal((s, n))
    B = rng.standard_normal((n, n))
    Q = B @ B.T / n + 0.01 * np.eye(n)
    C = rng.standard_normal((s, s))
    R = C @ C.T / s + 0.1 * np.eye(s)
    return A, H, Q, R


def cases(rng: np.random.Generator):
    for n, s in ((2, 1), (4, 2), (8, 3)):
        A, H, Q, R = random_system(rng, n, s)
        yield f"riccati n={n} s={s}", "riccati_fixed_point", (A, H, Q, R, 1e-12, 100_000)
    for B, T, n, s in ((25, 5000, 4, 2), (200, 500, 2, 1)):
        A, H, Q, R = random_system(rng, n, s)
        x0 = rng.standard_normal((B, n))
        eta = rng.standard_normal((B, T, n)) * 0.1
        v = rng.standard_normal((B, T, s)) * 0.1
        yield f"simulate B={B} T={T} n={n}", "simulate_lti", (A, H, x0, eta, v)
        gains = np.ascontiguousarray(np.broadcast_to(rng.standard_normal((n, s)) * 0.1, (T, n, s)))
        ys = rng.standard_normal((B, T, s))
        yield f"filter B={B} T={T} n={n}", "filter_means", (A, H, gains, np.zeros(n), ys)


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-9, atol=1e-12)
    return a == b


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", help="also write results to this file")
    args = parser.parse_args(argv)
    if backend.compiled is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(20240601)
    results = []
    print(f"{'case':32s} {'compiled (ms)':>14s} {'python (ms)':>12s} {'speedup':>8s}")
    for label, name, inputs in cases(rng):
        fast = getattr(backend.compiled, name)
        slow = getattr(backend.fallback, name)
        if not _same(fast(*inputs), slow(*inputs)):
            print(f"{label}: backends disagree", file=sys.stderr)
            return 1
        t_fast = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat)) * 1e3
        results.append({"case": label, "compiled_ms": t_fast, "python_ms": t_slow, "speedup": t_slow / t_fast})
        print(f"{label:32s} {t_fast:14.3f} {t_slow:12.3f} {t_slow / t_fast:7.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
