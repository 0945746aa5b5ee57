"""Build script: compiles the optional Cython sampler kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed.
"""
import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Skip the extension instead of failing the whole install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: building the accelerator extension failed ({exc}); "
                  "falling back to the pure-Python kernel")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); "
                  "falling back to the pure-Python kernel")


try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "saglmm._kernels._mala_cy",
                ["src/saglmm/_kernels/_mala_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
