"""Computable structure functions, free energies and susceptibility scans."""

__version__ = "0.1.0"
