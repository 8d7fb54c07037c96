import shlex
import subprocess

import pybind11
from setuptools import Extension, setup


def _absl_libs():
    try:
        out = subprocess.run(["pkg-config", "--libs", "absl_flat_hash_map", "absl_node_hash_map"],
                             capture_output=True, text=True, check=True).stdout
    except (OSError, subprocess.CalledProcessError):
        return ["-labsl_raw_hash_set", "-labsl_hash", "-labsl_city", "-labsl_low_level_hash"]
    return shlex.split(out)


setup(
    ext_modules=[
        Extension(
            "vertexlab._kernel",
            ["src/vertexlab/_kernel.cpp"],
            include_dirs=[pybind11.get_include()],
            libraries=["gmpxx", "gmp"],
            extra_compile_args=["-O2", "-g0", "-std=c++17"],
            extra_link_args=_absl_libs(),
            language="c++",
            optional=True,
        )
    ]
)
