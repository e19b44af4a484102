"""Figure regeneration for solver benchmark traces."""

from .figures import FigureSpec, RenderError, group_traces, read_trace, render

__all__ = ["FigureSpec", "RenderError", "group_traces", "read_trace", "render"]
__version__ = "0.1.0"
