"""Dirichlet-Laplacian spectra of planar domains made of a bounded core and straight tubes."""

__version__ = "0.1.0"
