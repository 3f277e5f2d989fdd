"""Build script: compiles the optional log-sum-exp extension.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed Cython/C build is demoted to a warning.
"""

import warnings

import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/wassfact/_lse.pyx",
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
except Exception as exc:  # pragma: no cover - build-environment dependent
    warnings.warn(f"building without compiled extension: {exc}")
    ext_modules = []

setup(ext_modules=ext_modules)
