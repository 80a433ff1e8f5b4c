"""Build script: compiles the optional statistics kernel extension.

The package works without the extension (a pure-Python twin is selected at
import time), so a failed Cython build only costs speed, never correctness.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "apdlbench.stats._ckernels",
                ["src/apdlbench/stats/_ckernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
