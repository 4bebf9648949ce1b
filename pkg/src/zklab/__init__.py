"""zklab: a numerical laboratory for the 2D mass-critical cubic
Zakharov-Kuznetsov equation u_t + d_x1 (Delta u + u^3) = 0."""

__version__ = "0.1.0"
