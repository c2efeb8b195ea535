import os

from setuptools import setup

ext_modules = []
if os.environ.get("LGBOED_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "lgboed._kernels",
                    ["src/lgboed/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # no Cython/numpy at build time: install the pure-Python package only
        ext_modules = []

setup(ext_modules=ext_modules)
