import os

from setuptools import setup

ext_modules = []
if os.environ.get("FAIRSCHED_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/fairsched/_speedups.pyx"],
            language_level=3,
        )
    except ImportError:
        # No Cython available: install pure-Python only, the kernel
        # shim falls back at import time.
        ext_modules = []

setup(ext_modules=ext_modules)
