"""Compare the compiled kernels against the numpy fallback on the three hot
paths: batched merit evaluation, the point-plus-gradient stencil used inside
the acquisition maximizer, and a full multistart maximization.

Run:  python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from strategist import gp
from strategist._kernels import _ref
from strategist.core import SearchSpace

try:
    from strategist._kernels import _fast
except ImportError:
    _fast = None


def _model(k: int, p: int, seed: int = 0) -> gp.GpModel:
    rng = np.random.default_rng(seed)
    return gp.fit(
        rng.uniform(-1, 1, (k, p)), rng.standard_normal(k), np.full(p, 0.5)
    )


def _time(fn, *args, repeat: int = 5, **kwargs) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_batch(backend, m, Xq):
    return _time(
        backend.ei_batch, Xq, m.X, m.lam, m.chol, m.w, m.rinv1, m.s11, m.b,
        m.sigma2, m.f_min,
    )


def bench_point_grad(backend, m, pts, steps):
    def run():
        for x in pts:
            backend.ei_point_and_grad(
                x, m.X, m.lam, m.chol, m.w, m.rinv1, m.s11, m.b, m.sigma2,
                m.f_min, steps,
            )

    return _time(run)


def bench_maximize(backend_name, m, space):
    import importlib
    import os

    import strategist._kernels as kernels
    from strategist.acquisition import maximize_ei

    os.environ["STRATEGIST_PURE_PYTHON"] = "1" if backend_name == "numpy" else ""
    importlib.reload(kernels)
    try:
        return _time(maximize_ei, m, m.f_min, space, 50, 0, repeat=2)
    finally:
        os.environ.pop("STRATEGIST_PURE_PYTHON", None)
        importlib.reload(kernels)


def main() -> None:
    rng = np.random.default_rng(1)
    rows = []
    for k, p in [(20, 30), (60, 30), (15, 2)]:
        m = _model(k, p)
        Xq = rng.uniform(-1, 1, (10_000, p))
        pts = rng.uniform(-1, 1, (200, p))
        steps = np.full(p, 1e-6 * 2.0)
        row = {
            "k": k,
            "p": p,
            "batch numpy": bench_batch(_ref, m, Xq),
            "grad numpy": bench_point_grad(_ref, m, pts, steps),
        }
        if _fast is not None:
            row["batch cython"] = bench_batch(_fast, m, Xq)
            row["grad cython"] = bench_point_grad(_fast, m, pts, steps)
        rows.append(row)

    print(f"{'k':>4} {'p':>4} | {'ei_batch 10k pts':>24} | {'200 point+grad stencils':>26}")
    print(f"{'':>9} | {'numpy':>11} {'cython':>11}  | {'numpy':>12} {'cython':>12}")
    for r in rows:
        bc = r.get("batch cython")
        gc = r.get("grad cython")
        print(
            f"{r['k']:>4} {r['p']:>4} | {r['batch numpy'] * 1e3:>9.2f}ms "
            f"{(bc * 1e3 if bc else float('nan')):>9.2f}ms  |"
            f" {r['grad numpy'] * 1e3:>10.2f}ms {(gc * 1e3 if gc else float('nan')):>10.2f}ms"
        )
    if _fast is not None:
        r = rows[0]
        print(
            f"\nspeedup at k={r['k']}, p={r['p']}: "
            f"batch x{r['batch numpy'] / r['batch cython']:.1f}, "
            f"point+grad x{r['grad numpy'] / r['grad cython']:.1f}"
        )

    m = _model(30, 30)
    space = SearchSpace(np.full(30, -1.0), np.full(30, 1.0))
    t_np = bench_maximize("numpy", m, space)
    print(f"\nmaximize_ei (50 starts, k=30, p=30): numpy {t_np:.2f}s", end="")
    if _fast is not None:
        t_cy = bench_maximize("cython", m, space)
        print(f", cython {t_cy:.2f}s (x{t_np / t_cy:.1f})")
    else:
        print()


if __name__ == "__main__":
    main()
