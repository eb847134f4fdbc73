"""Build script for the optional compiled kernels.

The extension cimports LAPACK from ``scipy.linalg.cython_lapack``.  The
package works without it: ``hesssketch._backend`` falls back to a
numpy implementation when ``hesssketch._core`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("HESSSKETCH_NO_EXT") != "1":
    try:
        import numpy as np
        import scipy.linalg.cython_lapack  # noqa: F401  (its .pxd is cimported)
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "hesssketch._core",
                    ["src/hesssketch/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
