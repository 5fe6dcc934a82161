"""Bayesian Poisson time series with an exponentially decaying latent covariance."""

__version__ = "0.1.0"

__all__ = ["__version__"]
