from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "xpucost.nn._ckernels",
                ["src/xpucost/nn/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython/numpy at build time: install pure-Python; the numpy kernel
    # backend is selected at import.
    extensions = []

setup(ext_modules=extensions)
