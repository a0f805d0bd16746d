from setuptools import find_packages, setup

# Read README for long description if available
long_description = ""
try:
    with open("README.md", encoding="utf-8") as f:
        long_description = f.read()
except Exception:
    pass


install_requires = [
    "numpy>=1.24",
    "ray[default]==2.47.0",
    "click==8.2.1",
    "tomli-w>=1.0",
    "tomli>=1.1; python_version < '3.11'",
]

extras_require = {
    "test": ["pytest>=7", "pydot>=2"],
}

setup(
    name="evodag",
    version="1.0.0",
    author="evodag developers",
    description="evodag: asynchronous neuro-evolution of DAG-structured CNNs",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages("src"),
    package_dir={"": "src"},
    include_package_data=True,
    zip_safe=False,
    setup_requires=["wheel"],
    install_requires=install_requires,
    extras_require=extras_require,
    python_requires=">=3.10",
    entry_points={
        "console_scripts": [
            "evodag = evodag.cli:main",
        ]
    },
)
