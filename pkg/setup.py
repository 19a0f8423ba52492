#!/usr/bin/env python
# -*- coding: utf-8 -*-
from pathlib import Path

from setuptools import setup

# the version lives in the package so that it can be read without importing it
version = {}

exec((Path(__file__).parent / "gpuletsched" / "_version.py").read_text(), version)

setup(
    version=version["__version__"],
    entry_points={
        "console_scripts": [
            "gpuletsched = gpuletsched.cli:cli",
        ]
    },
)
