from __future__ import annotations

import re
from pathlib import Path

import setuptools

# Project metadata lives in pyproject.toml; this file only supplies the version.


def read_version():
    text = Path("perf_retrain", "_version.py").read_text(encoding="utf-8")
    match = re.search(r'^__version__ = "([^"]+)"', text, re.MULTILINE)
    if match is None:
        msg = "Could not find __version__ in perf_retrain/_version.py"
        raise RuntimeError(msg)
    return match.group(1)


setuptools.setup(
    version=read_version(),
    packages=["perf_retrain"],
    zip_safe=False,
)
