"""LUT-based atmospheric correction and analysis-ready-data tooling for multispectral imagery."""

__version__ = "0.1.0"
