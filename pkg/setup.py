"""Build the optional compiled kernels; the package falls back to numpy without them."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("KPOSIM_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("kposim._kernels", ["src/kposim/_kernels.pyx"],
                       include_dirs=[np.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                       # limited-range complex multiply avoids a libgcc call per product
                       extra_compile_args=["-O3", "-fcx-limited-range"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
