"""Plücker relations, a sequential blowup atlas over the Grassmannian chart Gr(3, n), point
tracking for matroid Gamma-schemes, and exact Jacobian smoothness checks."""

__version__ = "0.1.0"
