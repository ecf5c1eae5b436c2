"""Keystream kernels with a compiled fast path.

The deterministic sampler (counter-mode SHA3-256 feeding Box-Muller) is
the hot loop of adjudication: a single claim can consume tens of millions
of keystream words. Two interchangeable implementations live here:

* ``poa._accel`` - Cython/C extension (4-way AVX2 Keccak where available),
* :mod:`poa.kernels.pure` - hashlib + NumPy fallback.

The compiled kernel is used when importable unless ``POA_FORCE_PURE=1``.
Both produce bit-identical 64-bit keystream words; float outputs agree to
1e-9 per sample (libm vs NumPy transcendentals may differ in final ulps).

``benchmarks/bench_kernels.py`` compares the two.
"""

import os

from . import pure

_impl = pure
BACKEND = "pure"

if os.environ.get("POA_FORCE_PURE", "") != "1":
    try:
        from poa import _accel as _impl  # type: ignore[no-redef]

        BACKEND = "accel"
    except ImportError:
        pass

keystream_words = _impl.keystream_words
gaussians = _impl.gaussians
uniforms = _impl.uniforms
gaussian_rows = _impl.gaussian_rows
gaussian_dot = _impl.gaussian_dot

__all__ = [
    "BACKEND",
    "keystream_words",
    "gaussians",
    "uniforms",
    "gaussian_rows",
    "gaussian_dot",
    "pure",
]
