"""
wienernet - Topology learning for networked linear systems

Install in development mode:
    pip install -e .[dev]

This makes 'from wienernet.xxx import yyy' work from anywhere.
"""

from setuptools import setup

setup(
    name="wienernet",
    version="1.0.0",
    description="Topology learning for networked linear systems via regularized Wiener filters",
    packages=["wienernet"],
    install_requires=[
        "click>=8.0.0",
        "PyYAML>=6.0",
        "numpy>=1.24",
        "scipy>=1.10",
        "networkx>=3.0",
        "pandas>=2.0",
        "matplotlib>=3.7",
        "numba>=0.57",
    ],
    extras_require={
        "dev": [
            "pytest>=7.4.0",
            "pytest-cov>=4.1.0",
            "pytest-mock>=3.11.1",
            "pytest-timeout>=2.1.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "wienernet=wienernet.cli:cli",
        ],
    },
    python_requires=">=3.9",
)
