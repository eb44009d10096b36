"""Index-one minimal spheres, curvature flow with surgery and sweep-out widths."""
__version__ = "0.1.0"
