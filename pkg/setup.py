import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("M2SLT_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "m2slt._ckernels",
                    sources=["src/m2slt/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-DNPY_NO_DEPRECATED_API=NPY_1_9_API_VERSION"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        # no Cython: the package runs on the numpy fallback
        ext_modules = []

setup(ext_modules=ext_modules)
