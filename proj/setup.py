"""Builds the pybind11 extension against the C++ core sources directly, so
`pip install -e . --no-build-isolation` works without a separate CMake step."""

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

CORE_SOURCES = [
    "src/ledger.cpp",
    "src/rng.cpp",
    "src/tensor.cpp",
    "src/geometry.cpp",
    "src/pair_features.cpp",
    "src/ipa.cpp",
    "src/attention_kernel.cpp",
    "src/flash_ipa.cpp",
    "src/model_io.cpp",
    "src/bench.cpp",
]

ext_modules = [
    Pybind11Extension(
        "fipa._fipa",
        sources=["python/bindings.cpp"] + CORE_SOURCES,
        include_dirs=["include", "vendor"],
        cxx_std=20,
    )
]

setup(ext_modules=ext_modules, cmdclass={"build_ext": build_ext})
