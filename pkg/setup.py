"""Build the optional Cython interpolation kernel.

The package works without it: ``inhomns.interp`` falls back to a NumPy
implementation when the compiled module cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("INHOMNS_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "inhomns._interp",
                    ["src/inhomns/_interp.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
