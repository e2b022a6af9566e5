"""Predict the cost of symbolically executing MiniC functions from static
features and designed experiments."""

from pathlib import Path

__version__ = "0.1.0"

CORPUS_DIR = Path(__file__).parent / "corpus"
