import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("POINTSUP_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "pointsup._kernels._core",
                    ["src/pointsup/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython / numpy at build time: install with the pure-python kernels.
        ext_modules = []

setup(ext_modules=ext_modules)
