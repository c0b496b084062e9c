"""Build script.

The compiled kernel extension is optional: when Cython, NumPy headers, or a
C compiler are unavailable (or SHOPGRID_PURE_PYTHON=1 is set), the package
installs without it and falls back to the NumPy kernels at import time.
"""

import os

from setuptools import setup


def _extensions():
    if os.environ.get("SHOPGRID_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "shopgrid._kernels._core",
        ["src/shopgrid/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
