"""Simulated data generating processes and the replication study."""
