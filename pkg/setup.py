"""Optional compiled tape kernel; the package falls back to numpy without it."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("IMPLCHECK_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("implcheck._kernel._tape", ["src/implcheck/_kernel/_tape.pyx"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
