import os
import re
from setuptools import setup, find_packages


def get_version():
    VERSIONFILE = os.path.join("affordmap", "__init__.py")
    lines = open(VERSIONFILE).readlines()
    version_regex = r"^__version__ = ['\"]([^'\"]*)['\"]"
    for line in lines:
        mo = re.search(version_regex, line, re.M)
        if mo:
            return mo.group(1)
    raise RuntimeError(f"Unable to find version in {VERSIONFILE}.")


setup(
    name='affordmap',
    version=get_version(),
    description='Affordance grounding with a small vision-language model, plus the KLD/SIM/NSS scoring harness',
    packages=find_packages(),
    package_data={"affordmap": ["resources/*.split", "resources/*.txt", "resources/*.tsv"]},
    python_requires=">=3.8",
    install_requires=[
        "numpy",
        "numba",
        "sympy",
        "scipy",
        "pandas",
        "typing_extensions",
        "torch",
        "Pillow",
        "matplotlib",
    ],
    extras_require={
        "embeddings": ["transformers"],
        "test": ["pytest", "hypothesis", "pytest-cov", "mpmath"],
    },
    entry_points={
        "console_scripts": ["affordmap=affordmap.cli:main"],
    },
)
