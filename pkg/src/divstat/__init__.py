"""Chart-based toolkit for statistical manifolds with a divisible cubic form.

A manifold is given in a single chart by a metric expression matrix g and a
scalar potential sigma.  From that pair the package derives the dual
connections, their curvature, geodesics of the flat-side connection through
a conformal change of metric, and the canonical contrast function.
"""

__version__ = "0.1.0"
