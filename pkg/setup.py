"""Build the optional Cython kernels; the package works without them."""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # pure-Python install
    pass
else:
    ext_modules = cythonize(
        [
            Extension(
                "roomev._kernels_cy",
                ["src/roomev/_kernels_cy.pyx"],
                # no FMA contraction: the safety kernel must match the Python path bit for bit
                extra_compile_args=["-O2", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
