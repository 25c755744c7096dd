"""Optional Cython extension for the particle hot loops; the package works
without it through the numpy fallback."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("BESOV_MKV_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("besov_mkv._core", ["src/besov_mkv/_core.pyx"],
                       include_dirs=[np.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
