"""Approximate LETF option prices and implied vols under local-stochastic
volatility, verified against Monte Carlo and Fourier reference prices."""

__version__ = "0.1.0"
