"""Build script: compiles the optional sweep kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes the transport sweeps fast.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("csdplan._sweep_cy", ["src/csdplan/_sweep_cy.pyx"])],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
