"""Compare the compiled kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is timed on
identical inputs for both backends and the outputs are checked to agree.
"""

import argparse
import math
import sys
import timeit

import numpy as np

from ppcert import _core_py
from ppcert.beliefs import GaussianClassSpec, sample_gaussian_class_arrays
from ppcert.certify import default_w_grid

try:
    from ppcert import _core
except ImportError:
    _core = None


def _cases(rng, scale):
    u, a = 4, 5
    kernel = rng.dirichlet(np.ones(a), size=u)
    kernel[rng.random((u, a)) < 0.2] = 0.0
    kernel /= kernel.sum(axis=1, keepdims=True)
    pairs = np.array([(i, j) for i in range(u) for j in range(u) if i != j], dtype=np.int64)
    ws = np.asarray(default_w_grid())
    batch = 2048 * scale
    ms = rng.dirichlet(np.ones(a), size=(batch, 3))
    ks = rng.dirichlet(np.ones(4), size=(batch, a))
    means, covs = sample_gaussian_class_arrays(GaussianClassSpec(1.0, 5.0, rng.normal(size=6)), 0, 2000 * scale)
    x = np.zeros(6)
    eps = math.log(3)
    return {
        "pdp_violation_mass": (kernel, pairs, math.exp(eps), 1e-12),
        "two_point_tails": (kernel, pairs, ws, eps, 1e-12),
        "two_point_limit_tails": (kernel, pairs, eps, 1e-12),
        "batch_chain_pdp": (ms, ks, 3.0, 1e-12),
        "average_gaussian_deltas": (means, covs, x),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--scale", type=int, default=1, help="multiplies the batch sizes")
    args = parser.parse_args(argv)
    if _core is None:
        print("compiled core not built; only the numpy backend is available", file=sys.stderr)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}  agree")
    for name, args_ in _cases(rng, args.scale).items():
        py_fn = getattr(_core_py, name)
        t_py = min(timeit.repeat(lambda: py_fn(*args_), number=1, repeat=args.repeat)) * 1e3
        if _core is None:
            print(f"{name:<26}{t_py:>12.3f}{'-':>12}{'-':>10}  -")
            continue
        cy_fn = getattr(_core, name)
        t_cy = min(timeit.repeat(lambda: cy_fn(*args_), number=1, repeat=args.repeat)) * 1e3
        agree = np.allclose(np.asarray(py_fn(*args_)), np.asarray(cy_fn(*args_)), rtol=1e-12, atol=1e-12, equal_nan=True)
        print(f"{name:<26}{t_py:>12.3f}{t_cy:>12.3f}{t_py / t_cy:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
