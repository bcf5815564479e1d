"""Stochastic averaging for fast-slow systems driven by Wiener noise on a torus.

Cell problems on the noise torus, effective coefficients of the limiting
diffusion, Monte Carlo path ensembles and the statistics that compare them.
"""
from .errors import ConfigError, NumericalError, StochAvgError

__version__ = "0.1.0"

__all__ = ["ConfigError", "NumericalError", "StochAvgError", "__version__"]
