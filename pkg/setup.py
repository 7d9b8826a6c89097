from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension("fcu._fftcore", ["src/fcu/_fftcore.pyx"]),
]

setup(ext_modules=cythonize(extensions, language_level=3))
