"""Discrete-to-continuum approximation of Whittle-Matern type SPDEs on the flat torus.

Modules:

* ``geometry``: grids, point clouds, quadrature and transport maps
* ``operators``: graph and finite-difference operators, spectra, spectral calculus
* ``lifting``: projection/lifting and kernel norms
* ``spde``: noise, stochastic convolutions, time stepping
* ``harness``: convergence experiments and rate tables
* ``cli``: command-line entry point
"""

__version__ = "0.1.0"
