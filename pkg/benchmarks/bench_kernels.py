"""Time each hot kernel under the numba and pure-numpy backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--dim 16] [--keys 16]

Numba timings exclude the first (compiling) call. Both backends receive
identical inputs and their outputs are checked for agreement before timing.
"""
import argparse
import time

import numpy as np

from qenigma import kernels
from qenigma._backend import HAVE_NUMBA
from qenigma.core import RngStream
from qenigma.locking import generate_haar_ensemble
from qenigma.security import bloch_vectors, measurement_directions


def cases(dim, keys):
    m_bits = int(np.log2(keys))
    rng = np.random.default_rng(0)
    e = generate_haar_ensemble(int(np.log2(dim)), m_bits, RngStream(0))
    psi = e.locked_columns
    z = rng.standard_normal((4096, dim)) + 1j * rng.standard_normal((4096, dim))
    phis = np.ascontiguousarray(z / np.linalg.norm(z, axis=1, keepdims=True))
    q = generate_haar_ensemble(1, m_bits, RngStream(1))
    bloch = np.ascontiguousarray(bloch_vectors(q.locked_columns.T))
    per_key = np.ascontiguousarray(bloch_vectors(q.matrices.transpose(0, 2, 1)))
    dirs = measurement_directions(360, 180)
    B, R = 1024, 64
    resend = (e.matrices, rng.integers(0, dim, B), rng.integers(0, keys, (B, R)), rng.random((B, R)),
              rng.random((B, R)), rng.poisson(0.05, (B, R)), rng.integers(0, dim, (B, R)), 0.3)
    block = (e.matrices, rng.integers(0, dim, B), rng.integers(0, keys, (B, 7)), rng.random((B, 7)),
             rng.integers(0, dim, (B, 7)), 0.6)
    return {
        "objective_and_grad": (psi, phis[0]),
        "batch_objective": (psi, phis),
        "ascent": (psi, phis[1], 2000, 1e-8, 1e-4, 64.0),
        "bloch_grid_objective": (bloch, dirs),
        "mutual_info_grid": (per_key, dirs, True),
        "resend_batch": resend,
        "depolarizing_block": block,
    }


def best_time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a), np.asarray(b), atol=1e-9)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--keys", type=int, default=16)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    nb, npy = kernels.implementations("numba"), kernels.implementations("numpy")
    print(f"{'kernel':<22}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  agree")
    for name, call_args in cases(args.dim, args.keys).items():
        ok = agree(nb[name](*call_args), npy[name](*call_args))   # also compiles
        t_np = best_time(npy[name], call_args, args.repeat)
        t_nb = best_time(nb[name], call_args, args.repeat)
        print(f"{name:<22}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}x  {ok}")


if __name__ == "__main__":
    main()
