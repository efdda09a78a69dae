"""Build the optional Cython split-search extension.

Without Cython or a C compiler the package installs pure Python and the
numpy fallback in ``affrank._kernels._split_py`` is used.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
except ImportError:
    pass
else:
    ext_modules = cythonize(
        [
            Extension(
                "affrank._kernels._split",
                ["src/affrank/_kernels/_split.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
