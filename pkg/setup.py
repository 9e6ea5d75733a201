"""Builds the optional compiled kernels; the package falls back to pure Python without them."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("FAIRCACHE_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        import numpy

        ext_modules = cythonize(
            "src/faircache/_ckernels.pyx",
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
        for ext in ext_modules:
            ext.include_dirs.append(numpy.get_include())
            ext.extra_compile_args += ["-O3", "-ffp-contract=off"]
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
