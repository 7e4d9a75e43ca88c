"""Build script for the optional compiled convolution/pooling kernels.

The package works without the extension (a numpy fallback is selected at
import time); the extension just makes network training faster.
"""

import warnings

import numpy as np
from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build failures degrade to the numpy backend instead of failing the
    install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, no OpenMP, ...
            warnings.warn(f"compiled kernels skipped ({exc}); numpy backend will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled kernels skipped ({exc}); numpy backend will be used")


try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "rffid.nn._kernels",
                ["src/rffid/nn/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    warnings.warn("Cython not available; installing with the numpy kernel backend only.")
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
