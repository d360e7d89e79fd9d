"""Figure toolkit for otfs-ra CSV outputs."""

from .spec import FigureSpec, SpecError, read_spec
from .plot import FigureResult, load_rows, plot

__all__ = ["FigureSpec", "SpecError", "read_spec", "FigureResult",
           "load_rows", "plot"]
