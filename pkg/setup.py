import setuptools


def _requires_from_file(filename: str):
    return open(filename).read().splitlines()


setuptools.setup(
    name="etlnet",
    version="0.1.0",
    packages=setuptools.find_packages(exclude=["test", "test.*"]),
    install_requires=_requires_from_file("requirements.txt"),
    entry_points={"console_scripts": ["etlnet=etlnet.cli:main"]},
)
