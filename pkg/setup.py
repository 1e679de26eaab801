from setuptools import Extension, setup
from Cython.Build import cythonize

ext = Extension(
    "gatewatch.kernels._native",
    sources=["src/gatewatch/kernels/_native.pyx"],
    extra_compile_args=["-O3"],
)

setup(ext_modules=cythonize([ext], language_level=3))
