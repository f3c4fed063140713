"""Builds the optional compiled QP kernel.

The package works without it: powerroute.kernels falls back to the
pure-Python implementation when the extension is absent.
"""

import os

from setuptools import Extension, setup

try:
    import numpy
    import scipy.linalg  # the kernel cimports scipy.linalg.cython_lapack
    from Cython.Build import cythonize
except ImportError:
    numpy = cythonize = None

if cythonize is not None and os.path.exists("src/powerroute/kernels/_qpcore.pyx"):
    extensions = cythonize(
        [
            Extension(
                "powerroute.kernels._qpcore",
                ["src/powerroute/kernels/_qpcore.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
else:
    extensions = []

setup(ext_modules=extensions)
