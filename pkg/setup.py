"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a numpy twin is
selected at import time), so a missing Cython toolchain degrades to a
pure-Python install instead of failing.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SOFTALIGN_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("softalign._kernels", ["src/softalign/_kernels.pyx"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
