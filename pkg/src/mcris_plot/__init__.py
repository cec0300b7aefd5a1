"""Batch figure rendering from the experiment harness's CSV output."""

from .figures import FigureSpec, render

__version__ = "0.1.0"
