"""Build script: compiles the rasterizer blending kernels when Cython is
available.  The package works without the extension (a numpy fallback is
selected at import time), so the build degrades gracefully."""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "xsplat.rasterizer._kernels",
                sources=["src/xsplat/rasterizer/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
