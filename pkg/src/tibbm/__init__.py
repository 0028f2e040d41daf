"""Numerical laboratory for branching Brownian motion with decreasing variance.

Submodules
----------
airy        Airy function, zeros and the Dirichlet eigenbasis.
sigma       Variance profiles and the deterministic predictor curves.
spectral    Moving-eigenbasis solver for the Airy-type parabolic PDE.
fkpp        Finite-difference FKPP front solver and expansion fit.
montecarlo  Pruned branching Brownian motion simulation.
gibbs       Derivative martingale and Gibbs measure of homogeneous BBM.
cli         Command-line entry point.
"""

__version__ = "0.1.0"
