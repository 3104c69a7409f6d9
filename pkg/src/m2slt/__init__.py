"""Desk-scale RGB-Event sign language translation with micro/macro sign retrieval."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
