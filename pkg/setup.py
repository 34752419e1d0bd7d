"""Build the optional compiled kernel; the package falls back to numpy without it."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("CCBE_NO_EXTENSION", "") == "":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "ccbe._rhs_core",
                    ["src/ccbe/_rhs_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
