from setuptools import setup, find_packages
from reeblab.version import version
with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name='reeblab',
    version=version,
    description="A verification lab for contact forms, Reeb flows and leafwise geodesics",
    packages=find_packages(exclude=['tests', 'examples', 'examples.*']),
    install_requires=[
        'numpy>=1.26',
        'scipy>=1.11',
        'networkx==3.4.2',
        'matplotlib==3.10.1'
    ],
    entry_points={
        'console_scripts': ['reeb-lab=reeblab.cli:main'],
    },
    test_suite='tests',
    long_description=long_description,
    long_description_content_type="text/markdown",
    include_package_data=True,
)
