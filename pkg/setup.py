import os

from setuptools import Extension, setup


def ext_modules():
    if os.environ.get("SEASON_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    extensions = [
        Extension(
            "season._ckernels",
            [os.path.join("src", "season", "_ckernels.pyx")],
            extra_compile_args=["-O3"],
        )
    ]
    return cythonize(extensions, compiler_directives={"language_level": "3"})


setup(ext_modules=ext_modules())
