"""Sentence planning over a lexicalized TAG with a modal knowledge base."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(bundle: str, name: str) -> Path:
    """Path of a file in one of the shipped example bundles."""
    return Path(str(resources.files(__package__) / "data" / bundle / name))
