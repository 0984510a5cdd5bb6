"""Packing radii, Dirichlet p-Laplacian eigenvalues and min-max fake spectra
on finite geodesic metric measure spaces."""

__version__ = "0.1.0"
