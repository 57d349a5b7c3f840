"""Build script for the optional compiled kernel extension.

Set SEGSUM_PURE_PYTHON=1 to skip the extension entirely; the package then
runs on the numpy reference kernels selected at import time.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("SEGSUM_PURE_PYTHON", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "segsum.kernels._core",
                    ["src/segsum/kernels/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
