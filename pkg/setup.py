"""Build the optional Cython kernel; the package falls back to pure Python without it."""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("WMLAB_NO_EXTENSION"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        # no -ffast-math: the kernel must reproduce libm results bit for bit
        ext_modules = cythonize(
            [
                Extension(
                    "wmlab._kernels",
                    ["src/wmlab/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
