"""Build script for the optional compiled edit-distance kernel.

The package is fully functional without the extension; a pure-Python
fallback is selected at import time (see patchpad.editdist). Set
PATCHPAD_PURE=1 to skip the extension build entirely.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, fall back to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain
            print(f"warning: skipping compiled kernel ({exc}); using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not compile {ext.name} ({exc}); using pure-Python fallback")


ext_modules = []
if os.environ.get("PATCHPAD_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/patchpad/_speedups.pyx"],
            language_level="3",
        )
    except ImportError:
        print("warning: Cython not available; using pure-Python fallback")

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
