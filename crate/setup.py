"""Builds the native extension with cargo and places it where the install
mode expects it: the wheel staging dir for regular installs, the source
tree for editable ones."""

import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

ROOT = Path(__file__).resolve().parent


class CargoBuildExt(build_ext):
    def build_extension(self, ext):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "linchk-py"],
            cwd=ROOT,
            check=True,
        )
        built = ROOT / "target" / "release" / "liblinchk_py.so"
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)
        if self.inplace or getattr(self, "editable_mode", False):
            shutil.copyfile(built, ROOT / "python" / "linchk_py" / dest.name)


setup(
    ext_modules=[Extension("linchk_py._native", sources=[])],
    cmdclass={"build_ext": CargoBuildExt},
)
