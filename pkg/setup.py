#!/usr/bin/env python
import sys
from pathlib import Path

from setuptools import find_packages, setup
from setuptools.command.bdist_egg import bdist_egg

here = Path(__file__).parent


class bdist_egg_disabled(bdist_egg):
    """Refuse implicit egg builds, ``pip install .`` is the way to install"""

    def run(self):
        sys.exit("Aborting implicit building of eggs. Use `pip install .` to install from source.")


def read_requirements(path):
    """Requirement lines of path, without comments and editable installs"""
    reqs = []
    for line in (here / path).read_text().splitlines():
        req = line.strip()
        if req and not req.startswith(('-e', '#')):
            reqs.append(req)
    return reqs


version_ns = {}
exec((here / "collocetl" / "_version.py").read_text(), version_ns)

setup_args = dict(
    name='collocetl',
    version=version_ns["__version__"],
    packages=find_packages(),
    description="Collocate geostationary imager pixels with polar-orbiting radar profiles",
    long_description=(here / "README.md").read_text(),
    long_description_content_type="text/markdown",
    license="BSD",
    keywords=['ETL', 'remote sensing', 'collocation', 'GOES', 'CloudSat'],
    python_requires=">=3.8",
    include_package_data=True,
    package_data={'collocetl': ['schemas/*.yaml']},
    install_requires=read_requirements('requirements.txt'),
    extras_require={
        'test': [
            'pytest>=2.8',
            # FIXME: unpin pytest-asyncio once the suite runs on its strict mode
            'pytest-asyncio>=0.17,<0.23',
            'pytest-cov',
        ],
        'docs': [
            'autodoc-traits',
            'myst-parser',
            'sphinx-book-theme',
            'sphinx-copybutton',
        ],
    },
    entry_points={
        'console_scripts': [
            'collocetl = collocetl.app:main',
        ],
    },
    cmdclass={
        'bdist_egg': bdist_egg if 'bdist_egg' in sys.argv else bdist_egg_disabled,
    },
    classifiers=[
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Atmospheric Science',
        'Topic :: Scientific/Engineering :: GIS',
    ],
)


if __name__ == '__main__':
    setup(**setup_args)
