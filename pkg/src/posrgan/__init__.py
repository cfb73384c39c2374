"""Perception-oriented single-image super-resolution on a NumPy autodiff engine."""

__version__ = "0.1.0"
