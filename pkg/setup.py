"""Builds the optional compiled kernel core; the package falls back to numpy without it."""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: install the pure-Python package only
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("increlora._ckernels", ["src/increlora/_ckernels.pyx"],
                   include_dirs=[np.get_include()], optional=True)],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
