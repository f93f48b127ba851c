import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "lingualign._kernels",
                ["src/lingualign/_kernels.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: install pure-Python only; the package falls back at import.
    ext_modules = []

setup(ext_modules=ext_modules)
