import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("HETRAG_NO_EXTENSIONS"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "hetrag.community._kernels",
                ["src/hetrag/community/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # keep float results identical to the pure-Python kernels
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
