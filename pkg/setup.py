import os

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernels are optional at runtime (a numpy fallback exists) but
# are always built here; set STGAD_NO_OPENMP=1 to build them single-threaded.
compile_args = ["-O3"]
link_args = []
if not os.environ.get("STGAD_NO_OPENMP"):
    compile_args.append("-fopenmp")
    link_args.append("-fopenmp")

extensions = [
    Extension(
        "stgad.engine._convcore",
        ["src/stgad/engine/_convcore.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
