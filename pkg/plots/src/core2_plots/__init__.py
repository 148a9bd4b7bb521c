"""Batch rendering of core2 report CSVs into figure files."""

__version__ = "0.1.0"

from .render import FigureSpec, RenderError, SchemaError, render
from .schemas import FIGURE_KINDS, REQUIRED_COLUMNS

__all__ = [
    "FIGURE_KINDS",
    "FigureSpec",
    "REQUIRED_COLUMNS",
    "RenderError",
    "SchemaError",
    "render",
]
