"""Adaptive mixed finite elements for the elasticity eigenproblem (pseudostress form)."""
__version__ = "0.1.0"
