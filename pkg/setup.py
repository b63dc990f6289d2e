import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "tenet_sim._lutcore",
                ["src/tenet_sim/_lutcore.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    # Pure-Python install still works; kernels.py falls back to the numpy path.
    ext_modules = []

setup(ext_modules=ext_modules)
