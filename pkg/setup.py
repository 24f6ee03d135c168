"""Build script for the optional compiled convolution kernel.

The extension is marked optional: if Cython or a C compiler is missing, the
install still succeeds and ``petcast.nn.kernels`` falls back to its NumPy
implementation at import time.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "petcast.nn.kernels._cconv",
                sources=["src/petcast/nn/kernels/_cconv.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
