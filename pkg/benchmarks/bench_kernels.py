"""Benchmark: compiled keystream kernel vs the pure NumPy fallback.

Run as ``python benchmarks/bench_kernels.py [--quick]``. The adjudicator's
cost is dominated by keystream expansion (counter-mode SHA3 + Box-Muller),
which is exactly what the native kernel accelerates.
"""

import argparse
import time

import numpy as np

from poa.kernels import BACKEND, pure

try:
    from poa import _accel
except ImportError:
    _accel = None

SEED = bytes(range(32))


def _rate(fn, total_units, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return total_units / best


def bench(quick: bool = False):
    n_words = 200_000 if quick else 4_000_000
    n_gauss = 200_000 if quick else 4_000_000
    n_rows = 64 if quick else 2048
    d = 1024
    w = np.linspace(-1.0, 1.0, d)

    impls = [("pure", pure)]
    if _accel is not None:
        impls.append(("accel", _accel))

    print(f"active backend: {BACKEND}")
    print(f"{'kernel':<18}{'impl':<8}{'rate':>18}")
    rates = {}
    for name, impl in impls:
        r = _rate(lambda: impl.keystream_words(SEED, 0, 0, n_words // 4), n_words)
        rates[("words", name)] = r
        print(f"{'keystream_words':<18}{name:<8}{r / 1e6:>12.2f} Mword/s")
    for name, impl in impls:
        r = _rate(lambda: impl.gaussians(SEED, n_gauss), n_gauss)
        rates[("gauss", name)] = r
        print(f"{'gaussians':<18}{name:<8}{r / 1e6:>12.2f} Mgauss/s")
    for name, impl in impls:
        r = _rate(lambda: impl.gaussian_dot(SEED, 1, n_rows, w), n_rows * d)
        rates[("dot", name)] = r
        print(f"{'gaussian_dot':<18}{name:<8}{r / 1e6:>12.2f} Mgauss/s")

    if _accel is not None:
        for key, label in (("words", "keystream"), ("gauss", "gaussians"), ("dot", "dot")):
            speedup = rates[(key, "accel")] / rates[(key, "pure")]
            print(f"speedup {label}: {speedup:.1f}x")

    # End-to-end flavor: one null-score pass at the 2^-11 sample count.
    from poa.generator import SurrogateBackend, embedding_from_prompt
    from poa.seeding import Identity, Kappa, MetaParams, derive_seed
    from poa import kernels

    m = MetaParams()
    backend = SurrogateBackend(default_m=m)
    emb = embedding_from_prompt("benchmark prompt")
    ident = Identity(id_bytes=SEED, label="bench", registered_at="1970-01-01T00:00:00+00:00")
    kappa = Kappa(m=m, e_digest=emb.digest, r=bytes(16))
    J = backend.generate(m, emb.digest, derive_seed(ident, kappa))
    G, c = backend.transfer(m, emb.digest)
    wv = G.T @ J.data
    n = 536 if quick else 11510
    t0 = time.perf_counter()
    kernels.gaussian_dot(SEED, 1, n, wv)
    dt = time.perf_counter() - t0
    print(f"null-score pass (n={n}, d={d}) with active backend: {dt * 1e3:.0f} ms")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    bench(quick=ap.parse_args().quick)
