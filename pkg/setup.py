from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "cellssl._fastcycles",
                ["src/cellssl/_fastcycles.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython/numpy at build time: install without the compiled kernel.
    # The package falls back to the pure-Python cycle enumerator at import.
    extensions = []

setup(ext_modules=extensions)
