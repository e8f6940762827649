"""Rights-expression license engine with a bounded verifier for license choosers."""

__version__ = "0.1.0"
