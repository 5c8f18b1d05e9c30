"""Build script: compiles the optional excursion-scan extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so a failed compile only costs speed.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "cfkmer._kernels._native",
                ["src/cfkmer/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    sys.stderr.write(f"cfkmer: building without compiled kernels ({exc})\n")

setup(ext_modules=ext_modules)
