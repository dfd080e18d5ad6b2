import os

from setuptools import setup

ext_modules = []
if not os.environ.get("CAVSOL_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "cavsol._rk4",
                    ["src/cavsol/_rk4.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-fcx-limited-range"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
