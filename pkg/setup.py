import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "scanet._convext",
    sources=["src/scanet/_convext.pyx", "src/scanet/_convcore.c"],
    include_dirs=[np.get_include(), "src/scanet"],
    extra_compile_args=["-O3", "-march=native", "-funroll-loops"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    depends=["src/scanet/_convcore.h", "src/scanet/_convcore_impl.h"],
)

setup(ext_modules=cythonize([ext], language_level=3))
