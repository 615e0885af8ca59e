"""Needle decompositions and isoperimetric certificates on asymmetric spaces."""

__version__ = "0.1.0"
