"""Shared value types, errors and logging helpers for poisson_expcov."""
