"""Build script: compiles the optional native keystream kernel.

The package is fully functional without the extension (a pure NumPy
fallback is selected at import time); the compiled kernel exists because
counter-mode SHA3 sampling dominates adjudication runtime.
"""

import sys

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext = Extension(
        "poa._accel",
        ["src/poa/_accel.pyx"],
        extra_compile_args=["-O3", "-march=native", "-funroll-loops"],
        optional=True,
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build host without Cython
    print(f"poa: building without native kernel ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
