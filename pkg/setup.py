import numpy
from setuptools import Extension, setup

# The compiled kernels are optional: the package falls back to the pure
# numpy implementations in wspnet._kernels_py when the extension is absent.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "wspnet._kernels_cy",
                sources=["src/wspnet/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
