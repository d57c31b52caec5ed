"""2D staggered-grid Navier-Stokes-Cahn-Hilliard simulator and verification library."""

__version__ = "0.1.0"

from . import fields, potential

__all__ = ["__version__", "potential", "fields"]
