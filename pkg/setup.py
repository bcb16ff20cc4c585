from setuptools import find_packages, setup

with open("requirements.txt") as f:
    requirements = [
        line.strip()
        for line in f
        if line.strip() and not line.startswith(("black", "pytest", "iniconfig", "pluggy"))
    ]

setup(
    name="odflow",
    version="1.0.0",
    description="Origin-destination matrices and transport mode shares from cellphone and smart-card logs",
    packages=find_packages(exclude=["examples", "examples.*"]),
    python_requires=">=3.10",
    install_requires=requirements,
    entry_points={"console_scripts": ["odflow=odflow.cli:main"]},
)
