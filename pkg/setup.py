"""Build script: compiles the optional Cython BPE kernel.

The package works without the extension (pure-Python kernels are selected
at import time), so a missing compiler or Cython must not fail the install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("translm._bpe_cy", ["src/translm/_bpe_cy.pyx"])],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
