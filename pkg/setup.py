"""Build script for the optional compiled time-stepping kernels.

The package is fully functional without the extension: sigmor._kernels
falls back to a pure-numpy implementation at import time. Set
SIGMOR_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import setup

extensions = []
if not os.environ.get("SIGMOR_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        extensions = cythonize(
            [
                Extension(
                    "sigmor._kernels._stepper",
                    ["src/sigmor/_kernels/_stepper.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        extensions = []

setup(ext_modules=extensions)
