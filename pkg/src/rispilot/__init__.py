"""Superimposed-pilot channel estimation and symbol detection for RIS-assisted OFDM."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
