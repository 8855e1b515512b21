import sys

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# Contraction into fused multiply-adds would break bitwise agreement with
# the pure-Python kernel.
flags = [] if sys.platform == "win32" else ["-O2", "-ffp-contract=off", "-fno-fast-math"]

ext = Extension(
    "parisian_levy.simulation._ckernel",
    ["src/parisian_levy/simulation/_ckernel.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=flags,
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))
