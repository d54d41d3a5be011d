"""Micro-benchmark: numba kernels vs the pure-numpy fallback.

Run with the default backend, then again under MIRACLE_NO_NUMBA=1 to
compare, or just read the table this script prints (it times both paths
directly). Matrix products go through BLAS either way and are not timed
here.
"""
import timeit

import numpy as np

from miracle import kernels


def bench(label, fn, *args, repeat=5, number=20):
    best = min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number))
    per_call_ms = best / number * 1e3
    print(f"  {label:<22} {per_call_ms:8.3f} ms/call")
    return per_call_ms


def main():
    rng = np.random.default_rng(0)
    # shaped like the classifier's widest layer (1024 x 256)
    mu = rng.standard_normal((1024, 256))
    rho = rng.standard_normal((1024, 256)) - 5.0
    eps = rng.standard_normal((1024, 256))
    logits = rng.standard_normal(4096) * 4
    ys = (rng.random(4096) < 0.3).astype(np.int64)

    pairs = [
        ("softplus", kernels.softplus, kernels.np_softplus, (rho,)),
        ("sigmoid", kernels.sigmoid, kernels.np_sigmoid, (rho,)),
        ("sample_gaussian", kernels.sample_gaussian,
         kernels.np_sample_gaussian, (mu, rho, eps)),
        ("rho_grad", kernels.rho_grad, kernels.np_rho_grad, (mu, eps, rho)),
        ("focal_terms", kernels.focal_terms,
         lambda l, y, a, g: kernels.np_focal_terms(l, y, a, g),
         (logits, ys, 0.8, 4.0)),
    ]

    print(f"active backend: {kernels.BACKEND}")
    if kernels.BACKEND != "numba":
        print("numba unavailable or disabled; timing the numpy path twice")
    for label, fast, ref, args in pairs:
        fast(*args)  # JIT warmup
        print(f"{label}:")
        t_fast = bench("active backend", fast, *args)
        t_ref = bench("numpy reference", ref, *args)
        print(f"  {'speedup':<22} {t_ref / t_fast:8.2f}x")


if __name__ == "__main__":
    main()
