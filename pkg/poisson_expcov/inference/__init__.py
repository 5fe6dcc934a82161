"""Gibbs engine, correlation factors, convergence and phi selection."""
