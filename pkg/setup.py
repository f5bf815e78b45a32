"""Build script: compiles the optional Cython kernels.

The package works without the extension (a pure-Python fallback is selected
at import time); set SYMOPT_SKIP_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

extensions = []
if not os.environ.get("SYMOPT_SKIP_EXT"):
    try:
        from Cython.Build import cythonize

        extensions = cythonize(
            [Extension("symopt._kernels", ["src/symopt/_kernels.pyx"])],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        extensions = []

setup(ext_modules=extensions)
