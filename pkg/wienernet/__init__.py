"""
wienernet - Topology learning for networked linear dynamical systems

Recovers the interaction graph of a networked LDS from nodal time series:
per-node regularized Wiener filters are fit at one frequency, and the
magnitude and phase of the coefficients are thresholded into the edge set.
"""

__version__ = "1.0.0"
