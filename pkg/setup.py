"""Build the optional compiled kernels.

The package works without them: ``edcausal.kernels`` falls back to the numpy
implementation when the extension is missing. ``EDCAUSAL_NO_EXT=1`` skips the
build; ``EDCAUSAL_PORTABLE=1`` drops the AVX2/libmvec flags.
"""
import os
import platform
import sys

from setuptools import setup


def _flags():
    portable = os.environ.get("EDCAUSAL_PORTABLE") == "1"
    if sys.platform.startswith("linux") and platform.machine() == "x86_64" and not portable:
        # -ffast-math lets gcc call glibc's vectorized exp/log; it is passed at
        # compile time only so crtfastmath (global FTZ/DAZ) is never linked
        return ["-O3", "-mavx2", "-mfma", "-ffast-math"], ["-lmvec"]
    return ["-O3"], []


ext_modules = []
if os.environ.get("EDCAUSAL_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        cflags, ldflags = _flags()
        ext_modules = cythonize(
            [
                Extension(
                    "edcausal._kernels",
                    ["src/edcausal/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=cflags,
                    extra_link_args=ldflags,
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
