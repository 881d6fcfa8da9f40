import os

from setuptools import setup

ext_modules = []
if os.environ.get("CHAINENT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "chainent._kernels",
                    ["src/chainent/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # pure-Python kernels are used at runtime
        ext_modules = []

setup(ext_modules=ext_modules)
