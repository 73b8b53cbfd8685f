"""Build the optional compiled simulation kernel.

The package works without it: ``wnoc_sim._backend`` falls back to the
pure-Python kernel when ``wnoc_sim._kernel`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("WNOC_SIM_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "wnoc_sim._kernel",
                    ["src/wnoc_sim/_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O2"],
                )
            ],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )

setup(ext_modules=ext_modules)
