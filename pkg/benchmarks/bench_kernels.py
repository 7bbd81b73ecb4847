"""Time the numba kernels against the pure-numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat K]``.  Both
implementations are imported side by side, so the environment flag does
not matter here; the first numba call (compilation) is excluded.
"""
import argparse
import timeit

import numpy as np

from sphere_hierarchy import _kernels
from sphere_hierarchy.polynomial import monomial_basis


def cases():
    # (label, kernel name, argument tuple)
    for n, e in [(3, 4), (4, 4), (6, 3)]:
        basis = np.array(monomial_basis(n, e), dtype=np.int64)
        binom = _kernels.binomial_table(n + 2 * e + 2)
        yield f"pair_targets n={n} e={e} N={len(basis)}", "pair_targets", (basis, binom)
        yield f"monomial_ranks n={n} deg={e} ({len(basis)})", "monomial_ranks", (basis, binom)

    rng = np.random.default_rng(0)
    exps = np.array(monomial_basis(4, 6), dtype=np.int64)
    coeffs = rng.normal(size=len(exps))
    pts = rng.normal(size=(10_000, 4))
    yield "evaluate_many 84 terms x 10^4 points", "evaluate_many", (exps, coeffs, pts)

    for N in (50, 200):
        B = rng.normal(size=(N, N))
        yield f"dd_margins N={N}", "dd_margins", ((B + B.T) / 2,)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    impls = {"numpy": _kernels.numpy_impl}
    if _kernels._HAVE_NUMBA:
        impls["numba"] = _kernels.numba_impl
    else:
        print("numba not importable; timing numpy only")

    print(f"{'case':44s}" + "".join(f"{k:>12s}" for k in impls) + "   speedup")
    for label, name, call_args in cases():
        times = {}
        for key, impl in impls.items():
            fn = getattr(impl, name)
            fn(*call_args)  # warm up / compile
            times[key] = min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat))
        row = f"{label:44s}" + "".join(f"{times[k] * 1e3:10.3f}ms" for k in impls)
        if "numba" in times:
            row += f"   {times['numpy'] / times['numba']:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
