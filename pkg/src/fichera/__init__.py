"""Spectral computations for the Fichera layer and its two-dimensional guides."""
from .basis import BasisSpec
from .eigensolve import EigenResult, smallest_eigenpairs
from .geometry import Geometry2D, Geometry3D, GradingSpec, Mesh

__version__ = "0.1.0"

__all__ = ["BasisSpec", "EigenResult", "Geometry2D", "Geometry3D", "GradingSpec", "Mesh",
           "smallest_eigenpairs"]
