"""Build hook: compiles the optional speedup extension when Cython is present.

Set COGMESH_PURE=1 to skip the extension entirely; the package falls back to
the pure-Python kernels at import time either way.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("COGMESH_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/cogmesh/_speedups.pyx"],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
