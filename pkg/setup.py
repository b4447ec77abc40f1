import os

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "qsdlab._ssa",
                ["src/qsdlab/_ssa.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython available: the package falls back to the pure-Python kernel.
    ext_modules = []

if os.environ.get("QSDLAB_NO_EXT"):
    ext_modules = []

setup(ext_modules=ext_modules)
