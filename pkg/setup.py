from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    extensions = cythonize(
        [Extension("cavchain._chainstep", ["src/cavchain/_chainstep.pyx"],
                   extra_compile_args=["-O2"])],
        language_level=3)
except ImportError:
    # fall back to a pregenerated C file when Cython is unavailable
    extensions = [Extension("cavchain._chainstep", ["src/cavchain/_chainstep.c"],
                            extra_compile_args=["-O2"])]

setup(ext_modules=extensions)
