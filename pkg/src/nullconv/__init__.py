"""Null distances on static spacetimes and their convergence."""
__version__ = "0.1.0"
