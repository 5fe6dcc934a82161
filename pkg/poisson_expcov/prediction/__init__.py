"""Posterior predictive forecasts and the GLM baseline."""
