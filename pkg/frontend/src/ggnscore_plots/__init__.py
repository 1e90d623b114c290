from .plots import PlotSpec, SchemaError, render

__all__ = ["PlotSpec", "SchemaError", "render"]

__version__ = "0.1.0"
