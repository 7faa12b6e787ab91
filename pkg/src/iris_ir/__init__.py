"""Toolkit for building GIMPLE/LLVM IR corpora and scoring IR translations."""

from .errors import IrisError

__version__ = "0.1.0"

__all__ = ["IrisError", "__version__"]
