"""Constant mean curvature Killing graphs in warped products M x_rho R."""

__version__ = "0.1.0"
