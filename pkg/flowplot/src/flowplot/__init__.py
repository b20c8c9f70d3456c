"""Figure generation from graphflow CSV/JSON artifacts."""

from flowplot.cli import ArtifactError, PlotSpec, plot

__version__ = "0.1.0"

__all__ = ["ArtifactError", "PlotSpec", "plot", "__version__"]
