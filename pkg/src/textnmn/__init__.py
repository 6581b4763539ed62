"""Neural module networks for visual question answering, with caption and
knowledge-base fusion, on a small numpy autodiff engine."""

__version__ = "0.1.0"
