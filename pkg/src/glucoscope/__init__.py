"""Hypoglycemia prediction from CGM series rendered as scalogram images."""

from .errors import GlucoscopeError

__version__ = "0.1.0"

__all__ = ["GlucoscopeError", "__version__"]
