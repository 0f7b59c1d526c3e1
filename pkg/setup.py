"""Builds the optional Cython core; the package works without it."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("PPCERT_NO_EXT", "") in ("", "0"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("ppcert._core", ["src/ppcert/_core.pyx"], include_dirs=[numpy.get_include()])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
