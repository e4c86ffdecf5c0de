"""bosonlab: spectral tools for 2D focusing NLS and exact few-boson dynamics.

The package compares two descriptions of a dilute 2D attractive Bose gas on a
periodic box: the exact N-particle Schroedinger evolution with a scaled pair
interaction, and the effective one-body cubic NLS.  It computes the projector
counting functionals, transition terms, energy variance, smeared potentials
and density-matrix distances that connect the two.
"""

__version__ = "0.1.0"

from .grid import Field2D, GridSpec, make_grid

__all__ = ["Field2D", "GridSpec", "make_grid", "__version__"]
