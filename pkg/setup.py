import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "rlaug._ckernels",
        ["src/rlaug/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

# Without Cython the package installs pure-Python; rlaug.kernels falls back.
ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"}) if cythonize else []

setup(ext_modules=ext_modules)
