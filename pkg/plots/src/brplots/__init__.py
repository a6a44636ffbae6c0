"""Figure rendering for brrep experiment outputs (CSV/JSON in, PNG/SVG out)."""

__version__ = "0.1.0"

from .figspec import FigureSpec, SchemaError, CheckError
from .render import render
