from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off: the fallback backend must match the compiled kernels
# bit for bit, so FMA contraction of a*b+c is disabled.
extensions = [
    Extension(
        "ragtag._kernels._native",
        ["src/ragtag/_kernels/_native.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
