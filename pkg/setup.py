import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("BERMEX_SKIP_EXTENSION"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "bermex.rng._philox",
                ["src/bermex/rng/_philox.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
