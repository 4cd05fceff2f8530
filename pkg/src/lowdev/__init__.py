"""Lower deviations of the maximum of supercritical super-Brownian motion."""

__version__ = "0.1.0"
