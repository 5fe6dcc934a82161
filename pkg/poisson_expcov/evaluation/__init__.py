"""Scoring rules and fit metrics."""
