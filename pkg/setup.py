"""Build script for the compiled kernel extension.

The extension is optional: if the build fails (no compiler, no Cython), the
package installs anyway and falls back to the pure-Python kernels at import
time.  `-ffp-contract=off` keeps the compiled arithmetic bit-identical to the
pure-Python implementation, which the test suite relies on.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "arxrls._kernels.cykernels",
        sources=["src/arxrls/_kernels/cykernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
